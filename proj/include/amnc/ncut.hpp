#pragma once

// Graph-cut costs on hard partitions, the soft multi-class normalized-cut
// loss on cluster probabilities, its closed-form gradient and the
// tightness / hub-ness / cluster-degree diagnostics.

#include <cstddef>
#include <cstdint>
#include <vector>

#include "amnc/autodiff.hpp"
#include "amnc/tensor.hpp"

namespace amnc {

/// Added to every cluster degree P_c^T W 1 so that empty clusters give a 0 ratio.
inline constexpr double kNCutEpsilon = 1e-8;

using NodeSet = std::vector<std::size_t>;

/// Sum of w_ij over i in a, j in b. ArgumentError when the sets overlap.
double cut_cost(const Tensor<double>& w, const NodeSet& a, const NodeSet& b);

/// Cut(A,B)/Cut(A,V) + Cut(A,B)/Cut(B,V). A and B must partition V.
double ncut_cost(const Tensor<double>& w, const NodeSet& a, const NodeSet& b);

/// Same quantity through indicator vectors: 2 - S_a'WS_a/S_a'W1 - S_b'WS_b/S_b'W1.
double ncut_cost_indicator(const Tensor<double>& w, const NodeSet& a, const NodeSet& b);

/// sum_c Cut(A_c, V \ A_c) / Cut(A_c, V) for a hard labelling into k parts.
/// DegenerateGraphError if some part has zero association.
double kway_ncut_cost(const Tensor<double>& w, const std::vector<int>& labels, int k);

struct MinCut {
  std::vector<int> labels;
  double cost = 0.0;
};

/// Exhaustive minimum over every partition into exactly k nonempty parts.
/// Labels are canonical (first occurrence order). Limited to s <= 12 for
/// k = 2 and k^s <= 2e6 otherwise (SizeError).
MinCut brute_force_min_ncut(const Tensor<double>& w, int k);

struct LossWarnings {
  bool zero_affinity = false;
};

/// 1 - (1/k) sum_c (P_c' W P_c) / (P_c' W 1 + eps) as a 1x1 tape value.
/// P is s x k, W is s x s. An all-zero W yields 1 and sets zero_affinity.
template <class T>
Var<T> ncut_loss(Var<T> probabilities, Var<T> affinity, LossWarnings* warnings = nullptr) {
  const Tensor<T>& p = probabilities.value();
  const Tensor<T>& w = affinity.value();
  if (p.rank() != 2 || w.rank() != 2 || w.rows() != w.cols() || p.rows() != w.rows()) {
    throw ShapeError("ncut_loss: probabilities " + shape_string(p.shape()) + " vs affinity " +
                     shape_string(w.shape()));
  }
  if (warnings) {
    bool all_zero = true;
    for (T v : w.data()) all_zero = all_zero && v == T{0};
    warnings->zero_affinity = all_zero;
  }
  const std::size_t k = p.cols();
  Var<T> association = sum(mul(probabilities, matmul(affinity, probabilities)), 0);  // 1 x k
  Var<T> degree = sum(affinity, 1);                                                    // s x 1
  Var<T> cluster_degree = transpose(matmul(transpose(probabilities), degree));         // 1 x k
  Var<T> ratios = div(association, affine(cluster_degree, T{1}, static_cast<T>(kNCutEpsilon)));
  return affine(sum_all(ratios), static_cast<T>(-1.0 / static_cast<double>(k)), T{1});
}

/// Convenience evaluation of ncut_loss on plain tensors.
template <class T>
T ncut_loss_value(const Tensor<T>& probabilities, const Tensor<T>& affinity) {
  Tape<T> tape;
  return scalar(ncut_loss(tape.constant(probabilities), tape.constant(affinity)));
}

/// Closed-form d loss / d P via the quotient rule, s x k:
///   -(1/k) ((W + W') P_c (P_c'W1 + eps) - W1 (P_c'WP_c)) / (P_c'W1 + eps)^2
template <class T>
Tensor<T> ncut_loss_gradient(const Tensor<T>& p, const Tensor<T>& w) {
  if (p.rank() != 2 || w.rank() != 2 || w.rows() != w.cols() || p.rows() != w.rows()) {
    throw ShapeError("ncut_loss_gradient: probabilities " + shape_string(p.shape()) +
                     " vs affinity " + shape_string(w.shape()));
  }
  const std::size_t s = p.rows(), k = p.cols();
  const T eps = static_cast<T>(kNCutEpsilon);
  std::vector<T> degree(s, T{0});
  for (std::size_t i = 0; i < s; ++i)
    for (std::size_t j = 0; j < s; ++j) degree[i] += w(i, j);
  Tensor<T> grad({s, k});
  std::vector<T> wp(s), wtp(s);
  for (std::size_t c = 0; c < k; ++c) {
    for (std::size_t i = 0; i < s; ++i) {
      T a{0}, b{0};
      for (std::size_t j = 0; j < s; ++j) {
        a += w(i, j) * p(j, c);
        b += w(j, i) * p(j, c);
      }
      wp[i] = a;
      wtp[i] = b;
    }
    T num{0}, den{0};
    for (std::size_t i = 0; i < s; ++i) {
      num += p(i, c) * wp[i];
      den += p(i, c) * degree[i];
    }
    den += eps;
    for (std::size_t i = 0; i < s; ++i) {
      grad(i, c) = -((wp[i] + wtp[i]) * den - degree[i] * num) / (den * den) / static_cast<T>(k);
    }
  }
  return grad;
}

struct NCutDiagnostics {
  std::vector<double> tightness;       // tau_c, k entries
  std::vector<double> node_degree;     // gamma_i, s entries
  std::vector<double> cluster_degree;  // eta_c, k entries
};

/// tau_c = P_c'WP_c/(P_c'W1 + eps), gamma_i = W_i'1/1'W1, eta_c = P_c'W1/1'W1.
/// DegenerateGraphError when 1'W1 = 0.
template <class T>
NCutDiagnostics gradient_diagnostics(const Tensor<T>& p, const Tensor<T>& w) {
  if (p.rank() != 2 || w.rank() != 2 || w.rows() != w.cols() || p.rows() != w.rows()) {
    throw ShapeError("gradient_diagnostics: probabilities " + shape_string(p.shape()) +
                     " vs affinity " + shape_string(w.shape()));
  }
  const std::size_t s = p.rows(), k = p.cols();
  std::vector<double> row_sum(s, 0.0), col_sum(s, 0.0);
  double total = 0.0;
  for (std::size_t i = 0; i < s; ++i) {
    for (std::size_t j = 0; j < s; ++j) {
      row_sum[i] += w(i, j);
      col_sum[j] += w(i, j);
    }
  }
  for (double v : row_sum) total += v;
  if (total == 0.0) throw DegenerateGraphError("gradient_diagnostics: total affinity 1'W1 is zero");
  NCutDiagnostics out;
  for (std::size_t i = 0; i < s; ++i) out.node_degree.push_back(col_sum[i] / total);
  for (std::size_t c = 0; c < k; ++c) {
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < s; ++i) {
      double wp = 0.0;
      for (std::size_t j = 0; j < s; ++j) wp += w(i, j) * p(j, c);
      num += p(i, c) * wp;
      den += p(i, c) * row_sum[i];
    }
    out.tightness.push_back(num / (den + kNCutEpsilon));
    out.cluster_degree.push_back(den / total);
  }
  return out;
}

/// gamma_i / eta_c * (tau_c - 2 p_ic): the pull/push factorisation of the
/// per-cluster derivative of -tau_c. It equals that derivative exactly only
/// where (W P_c)_i = (W 1)_i p_ic, e.g. for uniform P.
template <class T>
Tensor<double> pull_push_factorisation(const Tensor<T>& p, const Tensor<T>& w) {
  const NCutDiagnostics diag = gradient_diagnostics(p, w);
  const std::size_t s = p.rows(), k = p.cols();
  Tensor<double> out({s, k});
  for (std::size_t i = 0; i < s; ++i)
    for (std::size_t c = 0; c < k; ++c)
      out(i, c) = diag.node_degree[i] / diag.cluster_degree[c] *
                  (diag.tightness[c] - 2.0 * static_cast<double>(p(i, c)));
  return out;
}

}  // namespace amnc
