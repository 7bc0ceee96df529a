#pragma once

// Patch affinity graphs: per-level cosine affinity and attention-guided fusion
// of several levels into one matrix with entries in [0, 1].

#include <cstddef>
#include <cstdint>
#include <vector>

#include "amnc/autodiff.hpp"
#include "amnc/kernels.hpp"
#include "amnc/tensor.hpp"

namespace amnc {

/// B feature maps sharing one h x w patch grid and d channels. Each level is
/// stored as an (h*w) x d matrix with patches in row-major grid order.
struct FeaturePyramid {
  std::uint32_t height = 0;
  std::uint32_t width = 0;
  std::uint32_t dim = 0;
  std::vector<Tensor<float>> levels;

  std::size_t patches() const { return std::size_t(height) * width; }
  std::size_t level_count() const { return levels.size(); }

  /// Throws ShapeError unless every level is patches() x dim and B >= 1.
  void validate() const;
};

/// w_ij = cos(f_i, f_j) for i != j, w_ii = 0. Zero-norm rows get similarity 0.
template <class T>
Tensor<T> cosine_affinity(const Tensor<T>& features) {
  if (features.rank() != 2 || features.rows() == 0 || features.cols() == 0) {
    throw ShapeError("cosine_affinity: expected patches x channels, got " +
                     shape_string(features.shape()));
  }
  const std::size_t s = features.rows(), d = features.cols();
  Tensor<T> out({s, s});
  kernels::parallel::cosine_affinity<T>(features.data(), out.data(), s, d);
  return out;
}

/// Pairwise attention per view: A_v[i][j] = alpha[i][v] * alpha[j][v].
/// alpha is s x B; returns B matrices of s x s.
template <class T>
std::vector<Var<T>> attention_from_alpha(Var<T> alpha) {
  detail::require_matrix(alpha.value(), "attention_from_alpha");
  std::vector<Var<T>> out;
  const std::size_t views = alpha.value().cols();
  out.reserve(views);
  for (std::size_t v = 0; v < views; ++v) {
    Var<T> column = slice(alpha, 1, v, v + 1);
    out.push_back(matmul(column, transpose(column)));
  }
  return out;
}

/// 0.5 * (1 + sum_v W_v .* A_v).
template <class T>
Var<T> fuse_affinities(const std::vector<Var<T>>& affinities, const std::vector<Var<T>>& attention) {
  if (affinities.empty() || affinities.size() != attention.size()) {
    throw ShapeError("fuse_affinities: " + std::to_string(affinities.size()) + " affinity levels vs " +
                     std::to_string(attention.size()) + " attention maps");
  }
  const Shape& s = affinities.front().value().shape();
  for (std::size_t v = 0; v < affinities.size(); ++v) {
    if (affinities[v].value().shape() != s || attention[v].value().shape() != s ||
        s.size() != 2 || s[0] != s[1]) {
      throw ShapeError("fuse_affinities: level " + std::to_string(v) + " affinity " +
                       shape_string(affinities[v].value().shape()) + " attention " +
                       shape_string(attention[v].value().shape()));
    }
  }
  Var<T> acc = mul(affinities[0], attention[0]);
  for (std::size_t v = 1; v < affinities.size(); ++v) acc = add(acc, mul(affinities[v], attention[v]));
  return affine(acc, T{0.5}, T{0.5});
}

}  // namespace amnc
