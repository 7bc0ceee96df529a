#include "amnc/cli.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <map>
#include <ostream>
#include <sstream>

#include "amnc/eval.hpp"
#include "amnc/gradcheck.hpp"
#include "amnc/io.hpp"
#include "amnc/mncutter.hpp"
#include "amnc/spectral.hpp"
#include "amnc/train.hpp"

namespace amnc {

namespace fs = std::filesystem;

std::map<std::string, std::string> parse_config_file(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open config file '" + path.string() + "'");
  std::map<std::string, std::string> out;
  std::string line;
  int number = 0;
  auto trim = [](std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    const auto e = s.find_last_not_of(" \t\r");
    return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
  };
  while (std::getline(is, line)) {
    ++number;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(path.string() + ":" + std::to_string(number) + ": expected 'key = value'");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError(path.string() + ":" + std::to_string(number) + ": empty key");
    out[key] = value;
  }
  return out;
}

namespace {

// Thrown for argument problems detected after CLI11 parsing (exit code 2).
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::uint64_t default_seed() {
  if (const char* env = std::getenv("MNCUT_SEED")) {
    try {
      return std::stoull(env);
    } catch (const std::exception&) {
      throw UsageError(std::string("MNCUT_SEED is not an unsigned integer: '") + env + "'");
    }
  }
  return 0;
}

std::vector<bool> parse_flags(const std::string& text, std::uint32_t levels) {
  std::vector<bool> out;
  if (text.empty()) return out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item == "1") out.push_back(true);
    else if (item == "0") out.push_back(false);
    else throw UsageError("--informative expects a comma-separated list of 0/1, got '" + text + "'");
  }
  if (out.size() != levels) {
    throw UsageError("--informative lists " + std::to_string(out.size()) + " flags for " +
                     std::to_string(levels) + " levels");
  }
  return out;
}

std::string frame_name(const std::string& prefix, std::size_t index) {
  std::ostringstream os;
  os << prefix << '_' << std::setw(4) << std::setfill('0') << index;
  return os.str();
}

// Input/output path pairs: a single file, or every .mvfp in a directory
// mapped to <output dir>/<stem><ext>.
std::vector<std::pair<fs::path, fs::path>> io_pairs(const fs::path& input, const fs::path& output,
                                                    const std::string& ext) {
  std::vector<std::pair<fs::path, fs::path>> pairs;
  if (fs::is_directory(input)) {
    fs::create_directories(output);
    for (const auto& f : list_pyramids(input)) pairs.emplace_back(f, output / (f.stem().string() + ext));
  } else {
    if (output.has_parent_path()) fs::create_directories(output.parent_path());
    pairs.emplace_back(input, output);
  }
  return pairs;
}

int cmd_synth(const fs::path& out_dir, fs::path gt_dir, const SynthSpec& base, const std::string& informative,
              std::uint32_t frames, const std::string& prefix, std::ostream& out) {
  SynthSpec spec = base;
  spec.informative = parse_flags(informative, spec.levels);
  if (gt_dir.empty()) gt_dir = out_dir;
  fs::create_directories(out_dir);
  fs::create_directories(gt_dir);
  for (std::uint32_t f = 0; f < frames; ++f) {
    SynthSpec frame_spec = spec;
    frame_spec.seed = Rng::derive(base.seed, f);
    const SynthFrame frame = synth_pyramid(frame_spec);
    const std::string name = frame_name(prefix, f);
    write_pyramid(frame.pyramid, out_dir / (name + ".mvfp"));
    write_mask(frame.mask, gt_dir / (name + ".pgm"));
  }
  out << "wrote " << frames << " frame(s) to " << out_dir.string() << '\n';
  return 0;
}

int cmd_infer(const fs::path& checkpoint, const fs::path& input, const fs::path& output, std::uint32_t height,
              std::uint32_t width, const fs::path& affinity_out, std::ostream& out) {
  const Checkpoint ck = load_checkpoint(checkpoint);
  const auto pairs = io_pairs(input, output, ".pgm");
  if (pairs.empty()) throw std::runtime_error("no .mvfp inputs in '" + input.string() + "'");
  const bool many = fs::is_directory(input);
  if (many && !affinity_out.empty()) fs::create_directories(affinity_out);
  for (const auto& [in, dst] : pairs) {
    const FeaturePyramid pyr = read_pyramid(in);
    check_pyramid(pyr, ck.config);
    const Prediction pred = predict(pyr, ck.params, ck.config);
    const std::uint32_t h = height ? height : pyr.height;
    const std::uint32_t w = width ? width : pyr.width;
    write_mask(resize_to_mask(pred.probabilities, pyr.height, pyr.width, h, w), dst);
    if (!affinity_out.empty()) {
      write_affinity(pred.fused_affinity,
                     many ? affinity_out / (in.stem().string() + ".affinity.mvfp") : affinity_out);
    }
    out << "infer " << in.filename().string() << " -> " << dst.string() << '\n';
  }
  return 0;
}

int cmd_spectral(const fs::path& input, const fs::path& output, int k, std::uint64_t seed, std::ostream& out) {
  const auto pairs = io_pairs(input, output, ".pgm");
  if (pairs.empty()) throw std::runtime_error("no .mvfp inputs in '" + input.string() + "'");
  for (const auto& [in, dst] : pairs) {
    const FeaturePyramid pyr = read_pyramid(in);
    pyr.validate();
    // Deepest level, standardised to [0, 1] the same way fusion does with unit attention.
    const Tensor<double> cos = cosine_affinity(pyr.levels.back().cast<double>());
    Tensor<double> w(cos.shape());
    for (std::size_t i = 0; i < cos.size(); ++i) w[i] = 0.5 * (1.0 + cos[i]);
    const std::vector<int> labels = spectral_partition(w, k, seed);
    SegmentationMask mask(pyr.height, pyr.width);
    for (std::size_t i = 0; i < labels.size(); ++i) mask.labels[i] = labels[i];
    write_mask(mask, dst);
    out << "spectral " << in.filename().string() << " -> " << dst.string() << '\n';
  }
  return 0;
}

int cmd_eval(const fs::path& pred_path, const fs::path& gt_path, MatchMode mode, std::uint32_t classes,
             std::ostream& out) {
  std::vector<std::pair<fs::path, fs::path>> pairs;
  if (fs::is_directory(gt_path)) {
    std::vector<fs::path> gts;
    for (const auto& e : fs::directory_iterator(gt_path))
      if (e.is_regular_file() && e.path().extension() == ".pgm") gts.push_back(e.path());
    std::sort(gts.begin(), gts.end());
    for (const auto& g : gts) pairs.emplace_back(pred_path / g.filename(), g);
  } else {
    pairs.emplace_back(pred_path, gt_path);
  }
  if (pairs.empty()) throw std::runtime_error("no ground-truth masks in '" + gt_path.string() + "'");

  std::vector<SegmentationMask> preds, gts;
  std::uint32_t num_classes = classes;
  for (const auto& [p, g] : pairs) {
    if (!fs::exists(p)) throw std::runtime_error("missing prediction '" + p.string() + "'");
    preds.push_back(read_mask(p));
    gts.push_back(read_mask(g));
    if (!classes)
      for (auto v : gts.back().labels) num_classes = std::max(num_classes, static_cast<std::uint32_t>(v) + 1);
  }
  std::vector<double> scores;
  out << std::setprecision(6) << std::fixed;
  for (std::size_t f = 0; f < pairs.size(); ++f) {
    const LabelMapping mapping = match_labels(preds[f], gts[f], mode);
    const IouReport report = miou(preds[f], gts[f], mapping, num_classes);
    out << "frame=" << pairs[f].second.stem().string() << " miou=" << report.mean;
    for (std::uint32_t c = 0; c < num_classes; ++c) {
      if (!std::isnan(report.per_class[c])) out << " iou[" << c << "]=" << report.per_class[c];
    }
    out << '\n';
    scores.push_back(report.mean);
  }
  double mean = 0.0, var = 0.0;
  for (double v : scores) mean += v;
  mean /= static_cast<double>(scores.size());
  for (double v : scores) var += (v - mean) * (v - mean);
  var /= static_cast<double>(scores.size());
  out << "mean=" << mean << " std=" << std::sqrt(var) << '\n';
  return 0;
}

int cmd_gradcheck(std::uint64_t seed, bool verbose, std::ostream& out) {
  bool ok = true;
  for (const auto& c : run_gradient_checks(seed)) {
    ok = ok && c.passed();
    if (verbose || !c.passed()) {
      out << (c.passed() ? "PASS " : "FAIL ") << c.name << " rel_err=" << std::scientific
          << std::setprecision(3) << c.error << " tol=" << c.tolerance << " instances=" << c.instances << '\n';
    }
  }
  out << (ok ? "gradcheck: all suites passed\n" : "gradcheck: FAILED\n");
  return ok ? 0 : 1;
}

}  // namespace

int run_command(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"amncut: multi-view normalized-cut segmentation engine", "amncut"};
  app.require_subcommand(1);

  std::uint64_t seed = 0;
  bool seed_given = false;
  auto seed_option = [&](CLI::App* sub) {
    sub->add_option_function<std::uint64_t>(
        "--seed", [&](const std::uint64_t& v) { seed = v, seed_given = true; },
        "random seed (default: $MNCUT_SEED or 0)");
  };

  // synth
  auto* synth = app.add_subcommand("synth", "generate synthetic planted-segment pyramids and masks");
  SynthSpec spec;
  fs::path synth_out, synth_gt;
  std::string informative;
  std::uint32_t frames = 1, grid = 16;
  std::string prefix = "frame";
  synth->add_option("--out", synth_out, "output directory for .mvfp files")->required();
  synth->add_option("--gt-out", synth_gt, "output directory for ground-truth .pgm masks (default: --out)");
  synth->add_option("--frames", frames, "number of frames")->check(CLI::PositiveNumber);
  synth->add_option("--grid", grid, "patch grid size (h = w)")->check(CLI::PositiveNumber);
  synth->add_option("--dim", spec.dim, "feature channels d")->check(CLI::PositiveNumber);
  synth->add_option("--levels", spec.levels, "pyramid levels B")->check(CLI::PositiveNumber);
  synth->add_option("--segments", spec.segments, "planted segments")->check(CLI::PositiveNumber);
  synth->add_option("--informative", informative, "per-level 0/1 flags, e.g. 0,1 (default: all 1)");
  synth->add_option("--noise", spec.noise, "noise standard deviation")->check(CLI::NonNegativeNumber);
  synth->add_option("--prefix", prefix, "file name prefix");
  std::uint64_t palette_seed = 0;
  auto* palette_opt = synth->add_option("--palette-seed", palette_seed,
                                        "seed of the segment centroids (default: --seed)");
  seed_option(synth);

  // train
  auto* train_cmd = app.add_subcommand("train", "train the cutter on a directory of .mvfp files");
  TrainConfig tc;
  fs::path config_file;
  bool quiet = false;
  train_cmd->add_option("--config", config_file, "flat 'key = value' config file; flags override it");
  train_cmd->add_option("--data", tc.data_dir, "directory of .mvfp training files");
  train_cmd->add_option("--checkpoint", tc.checkpoint, "checkpoint output path");
  train_cmd->add_option("--k", tc.clusters, "number of clusters");
  train_cmd->add_option("--blocks", tc.blocks, "transformer blocks (sigma)");
  train_cmd->add_option("--heads", tc.heads, "attention heads");
  train_cmd->add_option("--levels", tc.levels, "pyramid levels (0 = from data)");
  train_cmd->add_option("--lr", tc.adam.learning_rate, "Adam learning rate");
  train_cmd->add_option("--beta1", tc.adam.beta1, "Adam beta1");
  train_cmd->add_option("--beta2", tc.adam.beta2, "Adam beta2");
  train_cmd->add_option("--adam-eps", tc.adam.epsilon, "Adam epsilon");
  train_cmd->add_option("--batch", tc.batch, "batch size");
  train_cmd->add_option("--epochs", tc.epochs, "epochs");
  train_cmd->add_flag("--quiet", quiet, "do not log per-step losses");
  seed_option(train_cmd);

  // infer
  auto* infer = app.add_subcommand("infer", "predict masks with a trained checkpoint");
  fs::path infer_ck, infer_in, infer_out, affinity_out;
  std::uint32_t out_h = 0, out_w = 0;
  infer->add_option("--checkpoint", infer_ck, "checkpoint file")->required();
  infer->add_option("--input", infer_in, ".mvfp file or directory")->required();
  infer->add_option("--output", infer_out, ".pgm file or directory")->required();
  infer->add_option("--height", out_h, "mask height (default: patch grid)");
  infer->add_option("--width", out_w, "mask width (default: patch grid)");
  infer->add_option("--affinity-out", affinity_out, "also dump the fused affinity as .mvfp");

  // eval
  auto* eval = app.add_subcommand("eval", "score predicted masks against ground truth");
  fs::path pred_dir, gt_dir;
  std::string mode_name = "majority";
  std::uint32_t classes = 0;
  eval->add_option("--pred", pred_dir, "prediction .pgm file or directory")->required();
  eval->add_option("--gt", gt_dir, "ground-truth .pgm file or directory")->required();
  eval->add_option("--mode", mode_name, "label matching: majority | hungarian")
      ->check(CLI::IsMember({"majority", "hungarian"}));
  eval->add_option("--classes", classes, "number of classes (default: max gt label + 1)");

  // spectral
  auto* spectral = app.add_subcommand("spectral", "classical spectral NCut baseline on the deepest level");
  fs::path spec_in, spec_out;
  int spec_k = 2;
  spectral->add_option("--input", spec_in, ".mvfp file or directory")->required();
  spectral->add_option("--output", spec_out, ".pgm file or directory")->required();
  spectral->add_option("--k", spec_k, "number of segments")->check(CLI::Range(2, 255));
  seed_option(spectral);

  // gradcheck
  auto* gradcheck = app.add_subcommand("gradcheck", "run every finite-difference gradient suite");
  bool verbose = false;
  gradcheck->add_flag("--verbose", verbose, "print every suite, not only failures");
  seed_option(gradcheck);

  std::vector<const char*> argv{"amncut"};
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return 2;
  }

  try {
    if (!seed_given) seed = default_seed();

    if (*synth) {
      spec.height = spec.width = grid;
      spec.seed = seed;
      spec.palette_seed = palette_opt->count() ? palette_seed : seed;
      return cmd_synth(synth_out, synth_gt, spec, informative, frames, prefix, out);
    }

    if (*train_cmd) {
      if (!config_file.empty()) {
        // Config values fill in anything not given on the command line.
        for (const auto& [key, value] : parse_config_file(config_file)) {
          CLI::Option* opt = train_cmd->get_option_no_throw("--" + key);
          if (!opt || key == "config") throw UsageError("unknown config key '" + key + "'");
          if (opt->count() == 0) {
            opt->clear();
            opt->add_result(value);
            opt->run_callback();
          }
        }
      }
      if (tc.data_dir.empty() || tc.checkpoint.empty()) {
        throw UsageError("train needs --data and --checkpoint (flags or config file)");
      }
      tc.seed = seed;
      out << "effective config: k=" << tc.clusters << " blocks=" << tc.blocks << " heads=" << tc.heads
          << " levels=" << tc.levels << " lr=" << tc.adam.learning_rate << " beta1=" << tc.adam.beta1
          << " beta2=" << tc.adam.beta2 << " adam_eps=" << tc.adam.epsilon << " batch=" << tc.batch
          << " epochs=" << tc.epochs << " seed=" << tc.seed << " data=" << tc.data_dir.string()
          << " checkpoint=" << tc.checkpoint.string() << '\n';
      const TrainResult result = train(tc, quiet ? nullptr : &out);
      out << "trained " << result.losses.size() << " steps";
      if (!result.losses.empty()) out << ", final loss " << result.losses.back();
      out << "; checkpoint " << tc.checkpoint.string() << '\n';
      return 0;
    }

    if (*infer) return cmd_infer(infer_ck, infer_in, infer_out, out_h, out_w, affinity_out, out);
    if (*eval) return cmd_eval(pred_dir, gt_dir, parse_match_mode(mode_name), classes, out);
    if (*spectral) return cmd_spectral(spec_in, spec_out, spec_k, seed, out);
    if (*gradcheck) return cmd_gradcheck(seed, verbose, out);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}

}  // namespace amnc
