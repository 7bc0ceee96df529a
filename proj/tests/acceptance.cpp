// Acceptance suite: one PASS/FAIL line per acceptance criterion. Exits
// nonzero if any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <numeric>
#include <sstream>
#include <string>

#include "amnc/cli.hpp"
#include "amnc/eval.hpp"
#include "amnc/io.hpp"
#include "amnc/ncut.hpp"
#include "amnc/spectral.hpp"
#include "amnc/train.hpp"
#include "support.hpp"

using namespace amnc;
using Mat = Tensor<double>;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

const Mat kThreeNode = Mat::matrix(3, 3, {0, 0.9, 0.1, 0.9, 0, 0.1, 0.1, 0.1, 0});

Mat hard_assignment(const std::vector<int>& labels, std::size_t k) {
  Mat p({labels.size(), k});
  for (std::size_t i = 0; i < labels.size(); ++i) p(i, static_cast<std::size_t>(labels[i])) = 1.0;
  return p;
}

// Direct double sum of the soft loss.
double loss_oracle(const Mat& p, const Mat& w) {
  const std::size_t s = p.rows(), k = p.cols();
  double total = 0.0;
  for (std::size_t c = 0; c < k; ++c) {
    double assoc = 0.0, degree = 0.0;
    for (std::size_t i = 0; i < s; ++i)
      for (std::size_t j = 0; j < s; ++j) {
        assoc += p(i, c) * w(i, j) * p(j, c);
        degree += p(i, c) * w(i, j);
      }
    total += assoc / (degree + 1e-8);
  }
  return 1.0 - total / static_cast<double>(k);
}

bool same_partition(const std::vector<int>& a, const std::vector<int>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < a.size(); ++j)
      if ((a[i] == a[j]) != (b[i] == b[j])) return false;
  return true;
}

double two_way(const Mat& w, const std::vector<int>& labels) {
  NodeSet a, b;
  for (std::size_t i = 0; i < labels.size(); ++i) (labels[i] == 0 ? a : b).push_back(i);
  return ncut_cost(w, a, b);
}

Outcome gradient_correctness() {
  const auto t0 = Clock::now();
  double fd_worst = 0.0, closed_worst = 0.0;
  for (int n = 0; n < 20; ++n) {
    Rng rng(Rng::derive(2024, static_cast<std::uint64_t>(n)));
    const std::size_t k = std::vector<std::size_t>{2, 3, 5}[n % 3];
    const Mat w = testing::random_graph(rng, 16);
    const Mat p = testing::random_simplex_rows(rng, 16, k);
    Tape<double> tape;
    Var<double> vp = tape.parameter("p", p);
    tape.backward(ncut_loss(vp, tape.constant(w)));
    const Mat g = *tape.gradient(vp);
    auto f = [&](const Mat& x) { return loss_oracle(x, w); };
    fd_worst = std::max(fd_worst, relative_error(g, finite_difference_gradient(f, p, 1e-4)));
    closed_worst = std::max(closed_worst, relative_error(g, ncut_loss_gradient(p, w)));
  }
  const double elapsed = seconds_since(t0);
  return {fd_worst < 1e-4 && closed_worst < 1e-6 && elapsed < 5.0,
          "fd_rel=" + fmt("%.2e", fd_worst) + " closed_rel=" + fmt("%.2e", closed_worst) +
              " time=" + fmt("%.2fs", elapsed)};
}

Outcome loss_identities() {
  Rng rng(5);
  double uniform_err = 0.0;
  for (std::size_t k : {2u, 5u, 10u}) {
    const Mat w = testing::random_graph(rng, 20);
    const double v = ncut_loss_value(Mat({20, k}, 1.0 / static_cast<double>(k)), w);
    uniform_err = std::max(uniform_err, std::abs(v - (1.0 - 1.0 / static_cast<double>(k))));
  }
  const std::vector<int> labels{0, 0, 0, 1, 1, 2, 2, 2, 2};
  Mat block({9, 9});
  for (std::size_t i = 0; i < 9; ++i)
    for (std::size_t j = i + 1; j < 9; ++j)
      if (labels[i] == labels[j]) block(i, j) = block(j, i) = rng.uniform(0.1, 1.0);
  const double block_loss = ncut_loss_value(hard_assignment(labels, 3), block);
  const double three = ncut_loss_value(hard_assignment({0, 0, 1}, 2), kThreeNode);
  const MinCut min = brute_force_min_ncut(kThreeNode, 2);
  const bool ok = uniform_err <= 1e-6 && std::abs(block_loss) < 1e-6 && std::abs(three - 0.55) <= 1e-6 &&
                  std::abs(min.cost - 1.1) <= 1e-12 && min.labels == std::vector<int>{0, 0, 1};
  return {ok, "uniform_err=" + fmt("%.1e", uniform_err) + " block=" + fmt("%.1e", block_loss) +
                  " three_node=" + fmt("%.9f", three) + " min_ncut=" + fmt("%.6f", min.cost)};
}

Outcome dual_form() {
  Rng rng(77);
  double worst = 0.0;
  for (int n = 0; n < 100; ++n) {
    const std::size_t s = 2 + rng.below(9);
    const Mat w = testing::random_graph(rng, s, 0.01, 1.0);
    NodeSet a{0}, b;
    for (std::size_t i = 1; i < s; ++i) (rng.below(2) ? a : b).push_back(i);
    if (b.empty()) b.push_back(a.back()), a.pop_back();
    worst = std::max(worst, std::abs(ncut_cost(w, a, b) - ncut_cost_indicator(w, a, b)));
  }
  return {worst <= 1e-9, "max_diff=" + fmt("%.2e", worst) + " graphs=100"};
}

Outcome spectral_vs_oracle() {
  int below = 0, recovered = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    Rng rng(seed);
    const std::size_t s = 3 + rng.below(8);
    const Mat w = testing::random_graph(rng, s);
    if (two_way(w, spectral_partition(w, 2, seed)) < brute_force_min_ncut(w, 2).cost) ++below;
  }
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    Rng rng(500 + seed);
    const std::size_t s = 6 + rng.below(15);
    std::vector<int> labels(s);
    const std::size_t cut = 2 + rng.below(s - 3);
    for (std::size_t i = 0; i < s; ++i) labels[i] = i < cut ? 0 : 1;
    for (std::size_t i = s; i-- > 1;) std::swap(labels[i], labels[rng.below(i + 1)]);
    Mat w({s, s});
    for (std::size_t i = 0; i < s; ++i)
      for (std::size_t j = i + 1; j < s; ++j) {
        const double base = rng.uniform(1.0, 2.0);
        // Every intra weight is at least 10x every inter weight.
        w(i, j) = w(j, i) = labels[i] == labels[j] ? base : base / 20.0;
      }
    if (same_partition(spectral_partition(w, 2, seed), labels)) ++recovered;
  }
  return {below == 0 && recovered == 50, "below_optimum=" + std::to_string(below) + "/100 planted_recovered=" +
                                             std::to_string(recovered) + "/50"};
}

Outcome pull_push() {
  Mat w({10, 10});
  for (std::size_t i = 0; i < 10; ++i)
    for (std::size_t j = i + 1; j < 10; ++j) {
      const bool same = (i < 5) == (j < 5);
      w(i, j) = w(j, i) = same ? (i < 5 ? 0.95 : 0.25) : 0.02;
    }
  Rng rng(9);
  Mat p({10, 2});
  for (std::size_t i = 0; i < 10; ++i) {
    const double own = rng.uniform(0.5, 0.95);
    p(i, i < 5 ? 0 : 1) = own;
    p(i, i < 5 ? 1 : 0) = 1.0 - own;
  }
  Tape<double> tape;
  Var<double> vp = tape.parameter("p", p);
  tape.backward(ncut_loss(vp, tape.constant(w)));
  const Mat g = *tape.gradient(vp);
  const NCutDiagnostics diag = gradient_diagnostics(p, w);
  int agree = 0, pulls = 0;
  for (std::size_t c = 0; c < 2; ++c)
    for (std::size_t i = 0; i < 10; ++i) {
      double wp = 0.0, degree = 0.0;
      for (std::size_t j = 0; j < 10; ++j) wp += w(i, j) * p(j, c), degree += w(i, j);
      const bool pull = 2.0 * wp / degree > diag.tightness[c];
      pulls += pull;
      agree += (g(i, c) < 0.0) == pull;
    }
  return {agree == 20 && pulls > 0 && pulls < 20,
          "signs_matched=" + std::to_string(agree) + "/20 pulls=" + std::to_string(pulls) +
              " tau=(" + fmt("%.3f", diag.tightness[0]) + "," + fmt("%.3f", diag.tightness[1]) + ")"};
}

// Shared desk-scale synthetic suite: 16x16 grid, 3 segments, one informative
// and one noise level, d = 16. Training and test frames share the palette
// but have independent layouts and noise.
struct Suite {
  std::vector<FeaturePyramid> train;
  std::vector<SynthFrame> test;
};

Suite make_suite() {
  Suite s;
  const std::uint64_t palette = 31337;
  auto spec_for = [&](std::uint64_t seed) {
    SynthSpec spec;
    spec.height = spec.width = 16;
    spec.dim = 16;
    spec.levels = 2;
    spec.segments = 3;
    spec.informative = {true, false};
    spec.noise = 0.05;
    spec.seed = seed;
    spec.palette_seed = palette;
    return spec;
  };
  for (std::uint64_t f = 0; f < 8; ++f) s.train.push_back(synth_pyramid(spec_for(Rng::derive(1, f))).pyramid);
  for (std::uint64_t f = 0; f < 8; ++f) s.test.push_back(synth_pyramid(spec_for(Rng::derive(2, f))));
  return s;
}

TrainConfig suite_config(std::uint32_t k) {
  TrainConfig cfg;
  cfg.clusters = k;
  cfg.blocks = 1;
  cfg.heads = 4;
  cfg.batch = 4;
  cfg.epochs = 250;  // 8 frames / batch 4 = 2 steps per epoch, 500 steps
  cfg.adam.learning_rate = 3e-3;
  cfg.seed = 11;
  return cfg;
}

struct SuiteScore {
  double miou = 0.0;
  double alpha_informative = 0.0;
  double alpha_noise = 0.0;
  std::size_t steps = 0;
  double seconds = 0.0;
};

SuiteScore train_and_score(const Suite& suite, std::uint32_t k) {
  const auto t0 = Clock::now();
  const TrainResult r = train_frames(suite_config(k), suite.train);
  SuiteScore score;
  score.steps = r.losses.size();
  double a0 = 0.0, a1 = 0.0, count = 0.0;
  for (const auto& frame : suite.test) {
    const Prediction pred = predict(frame.pyramid, r.params, r.model);
    const SegmentationMask mask = resize_to_mask(pred.probabilities, 16, 16, 16, 16);
    score.miou += miou(mask, frame.mask, match_labels(mask, frame.mask), 3).mean;
    for (std::size_t i = 0; i < pred.alpha.rows(); ++i) a0 += pred.alpha(i, 0), a1 += pred.alpha(i, 1), ++count;
  }
  score.seconds = seconds_since(t0);
  score.miou /= static_cast<double>(suite.test.size());
  score.alpha_informative = a0 / count;
  score.alpha_noise = a1 / count;
  return score;
}

Outcome end_to_end(const SuiteScore& s) {
  const bool ok = s.miou >= 0.90 && s.steps <= 500 && s.seconds < 120.0 && s.alpha_informative > s.alpha_noise;
  return {ok, "k=5 steps=" + std::to_string(s.steps) + " miou=" + fmt("%.4f", s.miou) + " time=" +
                  fmt("%.1fs", s.seconds) + " alpha_informative=" + fmt("%.3f", s.alpha_informative) +
                  " alpha_noise=" + fmt("%.3f", s.alpha_noise)};
}

Outcome ablation(const SuiteScore& k2, const SuiteScore& k10) {
  return {k10.miou >= k2.miou, "miou(k=10)=" + fmt("%.4f", k10.miou) + " miou(k=2)=" + fmt("%.4f", k2.miou)};
}

int cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  return run_command(args, out, err);
}

Outcome determinism() {
  testing::TempDir dir("acceptance_det");
  auto pipeline = [&](const std::string& tag) {
    const std::string root = (dir / tag).string();
    bool ok = cli({"synth", "--out", root + "/data", "--frames", "3", "--grid", "8", "--dim", "8",
                   "--informative", "1,0", "--seed", "7"}) == 0;
    ok = ok && cli({"train", "--data", root + "/data", "--checkpoint", root + "/m.ckpt", "--k", "4", "--blocks",
                    "1", "--heads", "2", "--epochs", "3", "--batch", "2", "--lr", "0.003", "--seed", "5",
                    "--quiet"}) == 0;
    ok = ok && cli({"infer", "--checkpoint", root + "/m.ckpt", "--input", root + "/data", "--output",
                    root + "/pred", "--affinity-out", root + "/aff"}) == 0;
    return ok;
  };
  if (!pipeline("a") || !pipeline("b")) return {false, "pipeline command failed"};
  int files = 0, identical = 0;
  for (const auto& entry : std::filesystem::recursive_directory_iterator(dir / "a")) {
    if (!entry.is_regular_file()) continue;
    ++files;
    const auto twin = dir / "b" / std::filesystem::relative(entry.path(), dir / "a");
    identical += testing::slurp(entry.path()) == testing::slurp(twin);
  }
  // Checkpoint round-trip: reload, re-save, infer again.
  const Checkpoint ck = load_checkpoint(dir / "a/m.ckpt");
  save_checkpoint(dir / "roundtrip.ckpt", ck.config, ck.params);
  const bool ckpt_same = testing::slurp(dir / "a/m.ckpt") == testing::slurp(dir / "roundtrip.ckpt");
  const bool infer_ok = cli({"infer", "--checkpoint", (dir / "roundtrip.ckpt").string(), "--input",
                             (dir / "a/data").string(), "--output", (dir / "pred_rt").string()}) == 0;
  int masks_same = 0, masks = 0;
  for (const auto& f : list_pyramids(dir / "a/data")) {
    const std::string name = f.stem().string() + ".pgm";
    ++masks;
    masks_same += testing::slurp(dir / "a/pred" / name) == testing::slurp(dir / "pred_rt" / name);
  }
  const bool ok = files > 0 && identical == files && ckpt_same && infer_ok && masks_same == masks;
  return {ok, "identical_files=" + std::to_string(identical) + "/" + std::to_string(files) +
                  " roundtrip_masks=" + std::to_string(masks_same) + "/" + std::to_string(masks)};
}

SegmentationMask flat(std::vector<std::int32_t> labels) {
  SegmentationMask m(1, static_cast<std::uint32_t>(labels.size()));
  m.labels = std::move(labels);
  return m;
}

Outcome eval_oracles() {
  Rng rng(99);
  int agree = 0;
  const int trials = 500;
  for (int n = 0; n < trials; ++n) {
    const std::size_t rows = 1 + rng.below(6), cols = 1 + rng.below(6);
    std::vector<std::vector<double>> w(rows, std::vector<double>(cols));
    for (auto& r : w)
      for (auto& v : r) v = static_cast<double>(rng.below(30));
    const auto a = hungarian_maximize(w);
    double total = 0.0;
    for (std::size_t r = 0; r < rows; ++r)
      if (a[r] >= 0 && static_cast<std::size_t>(a[r]) < cols) total += w[r][static_cast<std::size_t>(a[r])];
    std::vector<std::size_t> perm(std::max(rows, cols));
    std::iota(perm.begin(), perm.end(), 0);
    double best = 0.0;
    do {
      double t = 0.0;
      for (std::size_t r = 0; r < rows; ++r)
        if (perm[r] < cols) t += w[r][perm[r]];
      best = std::max(best, t);
    } while (std::next_permutation(perm.begin(), perm.end()));
    agree += total == best;
  }
  LabelMapping identity;
  identity.assignment = {{0, 0}, {1, 1}};
  const double worked = miou(flat({0, 0, 1, 1}), flat({0, 1, 1, 1}), identity, 2).mean;
  return {agree == trials && std::abs(worked - 7.0 / 12.0) <= 1e-9,
          "hungarian_matches=" + std::to_string(agree) + "/" + std::to_string(trials) +
              " worked_miou=" + fmt("%.12f", worked)};
}

}  // namespace

int main() {
  int failures = 0;
  auto report = [&](const char* name, const Outcome& o) {
    std::cout << (o.pass ? "PASS " : "FAIL ") << name << ": " << o.detail << std::endl;
    failures += !o.pass;
  };
  auto guarded = [&](const char* name, const std::function<Outcome()>& f) {
    try {
      report(name, f());
    } catch (const std::exception& e) {
      report(name, {false, std::string("exception: ") + e.what()});
    }
  };

  guarded("gradient-correctness", gradient_correctness);
  guarded("loss-identities", loss_identities);
  guarded("dual-form-agreement", dual_form);
  guarded("spectral-vs-oracle", spectral_vs_oracle);
  guarded("pull-push-signs", pull_push);

  Suite suite;
  SuiteScore k5, k2, k10;
  bool suite_ok = true;
  try {
    suite = make_suite();
    k5 = train_and_score(suite, 5);
  } catch (const std::exception& e) {
    suite_ok = false;
    report("end-to-end-synthetic", {false, std::string("exception: ") + e.what()});
  }
  if (suite_ok) report("end-to-end-synthetic", end_to_end(k5));
  guarded("ablation-over-segmentation", [&] {
    k2 = train_and_score(suite, 2);
    k10 = train_and_score(suite, 10);
    return ablation(k2, k10);
  });
  guarded("determinism", determinism);
  guarded("eval-oracles", eval_oracles);

  std::cout << (failures ? "acceptance: " + std::to_string(failures) + " criterion(s) FAILED"
                         : std::string("acceptance: all criteria passed"))
            << std::endl;
  return failures ? 1 : 0;
}
