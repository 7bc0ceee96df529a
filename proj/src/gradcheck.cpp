#include "amnc/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

#include "amnc/affinity.hpp"
#include "amnc/autodiff.hpp"
#include "amnc/io.hpp"
#include "amnc/mncutter.hpp"
#include "amnc/ncut.hpp"
#include "amnc/rng.hpp"

namespace amnc {

namespace {

using Mat = Tensor<double>;
using Build = std::function<Var<double>(const std::vector<Var<double>>&)>;

Mat random_matrix(Rng& rng, std::size_t rows, std::size_t cols, double lo = -1.0, double hi = 1.0) {
  Mat m({rows, cols});
  for (auto& v : m.data()) v = rng.uniform(lo, hi);
  return m;
}

double weighted_sum(const Mat& out, const Mat& weights) {
  double total = 0.0;
  for (std::size_t i = 0; i < out.size(); ++i) total += out[i] * weights[i];
  return total;
}

// Worst relative error between tape and finite-difference gradients of
// sum(R .* op(inputs)) over every input.
double check_op(const std::vector<Mat>& inputs, const Build& build, Rng& rng) {
  Mat weights;
  {
    Tape<double> probe;
    std::vector<Var<double>> vars;
    for (const auto& in : inputs) vars.push_back(probe.constant(in));
    const Mat& out = build(vars).value();
    weights = random_matrix(rng, out.rows(), out.cols());
  }
  Tape<double> tape;
  std::vector<Var<double>> vars;
  for (std::size_t i = 0; i < inputs.size(); ++i) vars.push_back(tape.parameter("x" + std::to_string(i), inputs[i]));
  Var<double> out = build(vars);
  Var<double> objective = sum_all(mul(out, tape.constant(weights)));
  tape.backward(objective);

  double worst = 0.0;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    auto f = [&](const Mat& x) {
      Tape<double> t;
      std::vector<Var<double>> vs;
      for (std::size_t i = 0; i < inputs.size(); ++i) vs.push_back(t.constant(i == k ? x : inputs[i]));
      return weighted_sum(build(vs).value(), weights);
    };
    const Mat fd = finite_difference_gradient(f, inputs[k], kFiniteDifferenceStep);
    worst = std::max(worst, relative_error(*tape.gradient(vars[k]), fd));
  }
  return worst;
}

struct OpCase {
  std::string name;
  std::function<std::vector<Mat>(Rng&)> inputs;
  Build build;
};

std::vector<OpCase> primitive_cases() {
  std::vector<OpCase> cases;
  cases.push_back({"matmul", [](Rng& r) { return std::vector<Mat>{random_matrix(r, 3, 4), random_matrix(r, 4, 2)}; },
                   [](const auto& v) { return matmul(v[0], v[1]); }});
  cases.push_back({"transpose", [](Rng& r) { return std::vector<Mat>{random_matrix(r, 3, 5)}; },
                   [](const auto& v) { return transpose(v[0]); }});
  cases.push_back({"add", [](Rng& r) { return std::vector<Mat>{random_matrix(r, 4, 3), random_matrix(r, 1, 3)}; },
                   [](const auto& v) { return add(v[0], v[1]); }});
  cases.push_back({"mul", [](Rng& r) { return std::vector<Mat>{random_matrix(r, 4, 3), random_matrix(r, 4, 1)}; },
                   [](const auto& v) { return mul(v[0], v[1]); }});
  cases.push_back({"div",
                   [](Rng& r) {
                     Mat b = random_matrix(r, 4, 3, 0.5, 2.0);
                     return std::vector<Mat>{random_matrix(r, 4, 3), b};
                   },
                   [](const auto& v) { return div(v[0], v[1]); }});
  cases.push_back({"affine", [](Rng& r) { return std::vector<Mat>{random_matrix(r, 2, 5)}; },
                   [](const auto& v) { return affine(v[0], -0.7, 0.3); }});
  cases.push_back({"gelu", [](Rng& r) { return std::vector<Mat>{random_matrix(r, 3, 4, -3.0, 3.0)}; },
                   [](const auto& v) { return gelu(v[0]); }});
  cases.push_back({"softmax", [](Rng& r) { return std::vector<Mat>{random_matrix(r, 1, 5, -2.0, 2.0)}; },
                   [](const auto& v) { return softmax(v[0], 1); }});
  cases.push_back({"softmax_axis0", [](Rng& r) { return std::vector<Mat>{random_matrix(r, 4, 3, -2.0, 2.0)}; },
                   [](const auto& v) { return softmax(v[0], 0); }});
  cases.push_back({"layer_norm",
                   [](Rng& r) {
                     return std::vector<Mat>{random_matrix(r, 1, 8, -2.0, 2.0), random_matrix(r, 1, 8, 0.5, 1.5),
                                             random_matrix(r, 1, 8)};
                   },
                   [](const auto& v) { return layer_norm(v[0], v[1], v[2]); }});
  cases.push_back({"concat",
                   [](Rng& r) { return std::vector<Mat>{random_matrix(r, 3, 2), random_matrix(r, 3, 4)}; },
                   [](const auto& v) { return concat<double>({v[0], v[1]}, 1); }});
  cases.push_back({"slice", [](Rng& r) { return std::vector<Mat>{random_matrix(r, 4, 6)}; },
                   [](const auto& v) { return slice(v[0], 1, 1, 4); }});
  cases.push_back({"sum", [](Rng& r) { return std::vector<Mat>{random_matrix(r, 4, 3)}; },
                   [](const auto& v) { return sum(v[0], 0); }});
  return cases;
}

Mat random_simplex_rows(Rng& rng, std::size_t rows, std::size_t cols) {
  Tape<double> t;
  return softmax(t.constant(random_matrix(rng, rows, cols, -2.0, 2.0)), 1).value();
}

Mat random_affinity(Rng& rng, std::size_t s, double lo, double hi, double diagonal) {
  Mat w({s, s});
  for (std::size_t i = 0; i < s; ++i) {
    w(i, i) = diagonal;
    for (std::size_t j = i + 1; j < s; ++j) w(i, j) = w(j, i) = rng.uniform(lo, hi);
  }
  return w;
}

}  // namespace

std::vector<GradCheck> primitive_gradient_checks(std::uint64_t seed, int instances) {
  std::vector<GradCheck> out;
  std::uint64_t index = 0;
  for (const auto& c : primitive_cases()) {
    GradCheck g{c.name, 0.0, 1e-4, instances};
    for (int i = 0; i < instances; ++i) {
      Rng rng(Rng::derive(seed, index++));
      g.error = std::max(g.error, check_op(c.inputs(rng), c.build, rng));
    }
    out.push_back(g);
  }
  return out;
}

std::vector<GradCheck> ncut_gradient_checks(std::uint64_t seed, int instances) {
  GradCheck vs_fd{"ncut_loss/probabilities_vs_fd", 0.0, 1e-4, instances};
  GradCheck vs_closed{"ncut_loss/probabilities_vs_closed_form", 0.0, 1e-6, instances};
  GradCheck affinity_fd{"ncut_loss/affinity_vs_fd", 0.0, 1e-4, instances};
  const std::size_t ks[] = {2, 3, 5};
  for (int i = 0; i < instances; ++i) {
    Rng rng(Rng::derive(seed ^ 0x5EED, static_cast<std::uint64_t>(i)));
    const std::size_t s = 16, k = ks[i % 3];
    const Mat p = random_simplex_rows(rng, s, k);
    const Mat w = random_affinity(rng, s, 0.0, 1.0, 0.5);
    Tape<double> tape;
    Var<double> pv = tape.parameter("P", p);
    Var<double> wv = tape.parameter("W", w);
    tape.backward(ncut_loss(pv, wv));
    const Mat tape_p = *tape.gradient(pv);
    const Mat fd_p = finite_difference_gradient([&](const Mat& x) { return ncut_loss_value(x, w); }, p,
                                                kFiniteDifferenceStep);
    const Mat fd_w = finite_difference_gradient([&](const Mat& x) { return ncut_loss_value(p, x); }, w,
                                                kFiniteDifferenceStep);
    vs_fd.error = std::max(vs_fd.error, relative_error(tape_p, fd_p));
    vs_closed.error = std::max(vs_closed.error, relative_error(tape_p, ncut_loss_gradient(p, w)));
    affinity_fd.error = std::max(affinity_fd.error, relative_error(*tape.gradient(wv), fd_w));
  }
  return {vs_fd, vs_closed, affinity_fd};
}

std::vector<GradCheck> fusion_gradient_checks(std::uint64_t seed, int instances) {
  GradCheck g{"fuse_affinities/alpha", 0.0, 1e-4, instances};
  for (int i = 0; i < instances; ++i) {
    Rng rng(Rng::derive(seed ^ 0xF05E, static_cast<std::uint64_t>(i)));
    const std::size_t s = 6, views = 2;
    std::vector<Mat> ws;
    for (std::size_t v = 0; v < views; ++v) ws.push_back(random_affinity(rng, s, -1.0, 1.0, 0.0));
    const Mat alpha = random_simplex_rows(rng, s, views);
    const Mat weights = random_matrix(rng, s, s);
    auto fused = [&](Tape<double>& t, Var<double> a) {
      std::vector<Var<double>> wv;
      for (const auto& w : ws) wv.push_back(t.constant(w));
      return fuse_affinities(wv, attention_from_alpha(a));
    };
    Tape<double> tape;
    Var<double> a = tape.parameter("alpha", alpha);
    tape.backward(sum_all(mul(fused(tape, a), tape.constant(weights))));
    const Mat fd = finite_difference_gradient(
        [&](const Mat& x) {
          Tape<double> t;
          return weighted_sum(fused(t, t.constant(x)).value(), weights);
        },
        alpha, kFiniteDifferenceStep);
    g.error = std::max(g.error, relative_error(*tape.gradient(a), fd));
  }
  return {g};
}

std::vector<GradCheck> cutter_gradient_checks(std::uint64_t seed) {
  CutterConfig cfg;
  cfg.levels = 2;
  cfg.height = 3;
  cfg.width = 3;
  cfg.dim = 8;
  cfg.clusters = 3;
  cfg.blocks = 1;
  cfg.heads = 2;

  SynthSpec spec;
  spec.height = cfg.height;
  spec.width = cfg.width;
  spec.dim = cfg.dim;
  spec.levels = cfg.levels;
  spec.segments = 2;
  spec.noise = 0.3;
  spec.informative = {true, false};
  spec.seed = seed;
  const FeaturePyramid pyramid = synth_pyramid(spec).pyramid;

  // Perturb every tensor (biases and gains included) away from its init.
  ParameterSet<double> params = init_parameters(cfg, seed).cast<double>();
  Rng rng(Rng::derive(seed, 77));
  for (std::size_t i = 0; i < params.size(); ++i)
    for (auto& v : params[i].value.data()) v += 0.1 * rng.normal();

  auto loss_of = [&](const ParameterSet<double>& ps) {
    Tape<double> t;
    BoundParameters<double> bound(t, ps);
    CutterOutput<double> out = cutter_forward(t, pyramid, bound, cfg);
    return scalar(ncut_loss(out.probabilities, out.fused_affinity));
  };

  Tape<double> tape;
  BoundParameters<double> bound(tape, params);
  CutterOutput<double> out = cutter_forward(tape, pyramid, bound, cfg);
  tape.backward(ncut_loss(out.probabilities, out.fused_affinity));
  const auto grads = tape.gradients();

  std::vector<GradCheck> checks;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const std::string name = params[i].name;
    ParameterSet<double> probe = params;
    const Mat fd = finite_difference_gradient(
        [&](const Mat& x) {
          probe[i].value = x;
          return loss_of(probe);
        },
        params[i].value, kFiniteDifferenceStep);
    checks.push_back({"cutter/" + name, relative_error(grads.at(name), fd), 1e-3, 1});
  }
  return checks;
}

std::vector<GradCheck> run_gradient_checks(std::uint64_t seed) {
  std::vector<GradCheck> all = primitive_gradient_checks(seed);
  for (auto&& part : {ncut_gradient_checks(seed), fusion_gradient_checks(seed), cutter_gradient_checks(seed)})
    all.insert(all.end(), part.begin(), part.end());
  return all;
}

}  // namespace amnc
