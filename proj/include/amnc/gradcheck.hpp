#pragma once

// Finite-difference verification suites for every tape primitive, the
// normalized-cut loss, affinity fusion and the full cutter. All suites run in
// double precision with central differences at eps = 1e-4.

#include <cstdint>
#include <string>
#include <vector>

namespace amnc {

struct GradCheck {
  std::string name;
  double error = 0.0;      // worst relative error over the instances
  double tolerance = 0.0;
  int instances = 0;

  bool passed() const { return error < tolerance; }
};

inline constexpr double kFiniteDifferenceStep = 1e-4;

/// matmul, transpose, add, mul, div, affine, gelu, softmax, layer_norm,
/// concat, slice, sum against finite differences (tolerance 1e-4).
std::vector<GradCheck> primitive_gradient_checks(std::uint64_t seed, int instances = 20);

/// Tape gradient of the loss vs finite differences (1e-4) and vs the
/// closed-form quotient-rule gradient (1e-6); s = 16, k cycling over 2, 3, 5.
std::vector<GradCheck> ncut_gradient_checks(std::uint64_t seed, int instances = 20);

/// Gradient of a weighted sum of the fused affinity w.r.t. the view weights.
std::vector<GradCheck> fusion_gradient_checks(std::uint64_t seed, int instances = 20);

/// Loss of the full cutter w.r.t. every parameter tensor on s = 9, d = 8,
/// B = 2, k = 3, sigma = 1 (tolerance 1e-3).
std::vector<GradCheck> cutter_gradient_checks(std::uint64_t seed);

std::vector<GradCheck> run_gradient_checks(std::uint64_t seed);

}  // namespace amnc
