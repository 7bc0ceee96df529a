#include "amnc/train.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <ostream>
#include <sstream>

#include "amnc/io.hpp"
#include "amnc/ncut.hpp"

namespace amnc {

void adam_step(ParameterSet<float>& params, const std::vector<Tensor<float>>& grads, AdamState& state,
               const AdamConfig& cfg) {
  if (grads.size() != params.size()) {
    throw ShapeError("adam_step: " + std::to_string(grads.size()) + " gradients for " +
                     std::to_string(params.size()) + " parameters");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (grads[i].shape() != params[i].value.shape()) {
      throw ShapeError("adam_step: gradient " + shape_string(grads[i].shape()) + " for parameter '" +
                       params[i].name + "' " + shape_string(params[i].value.shape()));
    }
  }
  if (state.first.empty()) {
    for (std::size_t i = 0; i < params.size(); ++i) {
      state.first.emplace_back(params[i].value.shape());
      state.second.emplace_back(params[i].value.shape());
    }
  } else if (state.first.size() != params.size()) {
    throw ShapeError("adam_step: optimizer state does not match the parameter set");
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(cfg.beta1, t);
  const double correction2 = 1.0 - std::pow(cfg.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto value = params[i].value.data();
    auto m = state.first[i].data();
    auto v = state.second[i].data();
    const auto g = grads[i].data();
    for (std::size_t j = 0; j < value.size(); ++j) {
      // Moments are stored in float but this step's update uses them unrounded.
      const double gj = g[j];
      const double mj = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * gj;
      const double vj = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * gj * gj;
      m[j] = static_cast<float>(mj);
      v[j] = static_cast<float>(vj);
      const double m_hat = mj / correction1;
      const double v_hat = vj / correction2;
      value[j] -= static_cast<float>(cfg.learning_rate * m_hat / (std::sqrt(v_hat) + cfg.epsilon));
    }
  }
}

void TrainConfig::validate() const {
  auto fail = [](const std::string& what) { throw ConfigError("train config: " + what); };
  if (clusters < 2) fail("k must be >= 2");
  if (blocks < 1) fail("blocks must be >= 1");
  if (heads < 1) fail("heads must be >= 1");
  if (batch < 1) fail("batch must be >= 1");
  if (!(adam.learning_rate > 0.0)) fail("learning rate must be > 0");
  if (!(adam.beta1 > 0.0 && adam.beta1 < 1.0)) fail("beta1 must be in (0, 1)");
  if (!(adam.beta2 > 0.0 && adam.beta2 < 1.0)) fail("beta2 must be in (0, 1)");
  if (!(adam.epsilon > 0.0)) fail("epsilon must be > 0");
}

std::vector<std::filesystem::path> list_pyramids(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) {
    throw std::runtime_error("data directory '" + dir.string() + "' does not exist");
  }
  std::vector<std::filesystem::path> out;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".mvfp") out.push_back(entry.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

TrainResult train(const TrainConfig& cfg, std::ostream* log) {
  cfg.validate();
  const auto files = list_pyramids(cfg.data_dir);
  if (files.empty()) throw std::runtime_error("no .mvfp files in '" + cfg.data_dir.string() + "'");
  std::vector<FeaturePyramid> frames;
  frames.reserve(files.size());
  for (const auto& f : files) frames.push_back(read_pyramid(f));
  TrainResult result = train_frames(cfg, frames, log);
  if (!cfg.checkpoint.empty()) save_checkpoint(cfg.checkpoint, result.model, result.params);
  return result;
}

namespace {

struct ItemResult {
  double loss = 0.0;
  std::vector<Tensor<float>> grads;
  std::string failure;
};

std::string diagnostics_dump(const Tensor<float>& p, const Tensor<float>& w) {
  std::ostringstream os;
  try {
    const NCutDiagnostics d = gradient_diagnostics(p, w);
    os << "tau=";
    for (double v : d.tightness) os << v << ' ';
    os << "eta=";
    for (double v : d.cluster_degree) os << v << ' ';
    os << "gamma[min,max]=" << *std::min_element(d.node_degree.begin(), d.node_degree.end()) << ','
       << *std::max_element(d.node_degree.begin(), d.node_degree.end());
  } catch (const std::exception& e) {
    os << "diagnostics unavailable: " << e.what();
  }
  return os.str();
}

ItemResult run_item(const FeaturePyramid& frame, const ParameterSet<float>& params, const CutterConfig& model) {
  ItemResult r;
  Tape<float> tape;
  BoundParameters<float> bound(tape, params);
  CutterOutput<float> out = cutter_forward(tape, frame, bound, model);
  Var<float> loss = ncut_loss(out.probabilities, out.fused_affinity);
  r.loss = scalar(loss);
  if (!std::isfinite(r.loss)) {
    r.failure = diagnostics_dump(out.probabilities.value(), out.fused_affinity.value());
    return r;
  }
  tape.backward(loss);
  auto grads = tape.gradients();
  r.grads.reserve(params.size());
  for (const auto& p : params) r.grads.push_back(std::move(grads.at(p.name)));
  return r;
}

}  // namespace

TrainResult train_frames(const TrainConfig& cfg, const std::vector<FeaturePyramid>& frames, std::ostream* log) {
  cfg.validate();
  if (frames.empty()) throw std::runtime_error("no training frames");
  const FeaturePyramid& first = frames.front();
  first.validate();
  TrainResult result;
  CutterConfig& model = result.model;
  model.levels = cfg.levels ? cfg.levels : static_cast<std::uint32_t>(first.level_count());
  model.height = first.height;
  model.width = first.width;
  model.dim = first.dim;
  model.clusters = cfg.clusters;
  model.blocks = cfg.blocks;
  model.heads = cfg.heads;
  model.validate();
  for (const auto& f : frames) check_pyramid(f, model);

  result.params = init_parameters(model, Rng::derive(cfg.seed, 0));
  Rng shuffle_rng(Rng::derive(cfg.seed, 1));
  AdamState state;
  std::vector<std::size_t> order(frames.size());
  std::uint64_t step = 0;

  for (std::uint32_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[shuffle_rng.below(i)]);

    for (std::size_t start = 0; start < order.size(); start += cfg.batch) {
      const std::size_t count = std::min<std::size_t>(cfg.batch, order.size() - start);
      std::vector<ItemResult> items(count);
      std::vector<std::exception_ptr> errors(count);
      const auto n = static_cast<long long>(count);
#pragma omp parallel for schedule(static)
      for (long long b = 0; b < n; ++b) {
        try {
          items[b] = run_item(frames[order[start + b]], result.params, model);
        } catch (...) {
          errors[b] = std::current_exception();
        }
      }
      for (auto& e : errors)
        if (e) std::rethrow_exception(e);

      double loss = 0.0;
      std::vector<Tensor<float>> grads;
      for (std::size_t b = 0; b < count; ++b) {
        if (!items[b].failure.empty()) {
          throw TrainingError("non-finite loss at step " + std::to_string(step) + " (frame " +
                              std::to_string(order[start + b]) + "): " + items[b].failure);
        }
        loss += items[b].loss;
        if (b == 0) {
          grads = std::move(items[b].grads);
          continue;
        }
        for (std::size_t p = 0; p < grads.size(); ++p) {
          auto dst = grads[p].data();
          const auto src = items[b].grads[p].data();
          for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += src[j];
        }
      }
      const float inv = 1.0f / static_cast<float>(count);
      for (auto& g : grads)
        for (auto& v : g.data()) v *= inv;
      loss /= static_cast<double>(count);
      adam_step(result.params, grads, state, cfg.adam);
      result.losses.push_back(loss);
      if (log) *log << "step=" << step << " epoch=" << epoch << " loss=" << loss << '\n';
      ++step;
    }
  }
  return result;
}

}  // namespace amnc
