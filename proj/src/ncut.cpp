#include "amnc/ncut.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace amnc {

namespace {

void require_square(const Tensor<double>& w, const char* op) {
  if (w.rank() != 2 || w.rows() != w.cols()) {
    throw ShapeError(std::string(op) + ": affinity must be square, got " + shape_string(w.shape()));
  }
}

std::vector<char> membership(const NodeSet& set, std::size_t s, const char* op) {
  std::vector<char> in(s, 0);
  for (auto i : set) {
    if (i >= s) throw ArgumentError(std::string(op) + ": node " + std::to_string(i) + " out of range");
    in[i] = 1;
  }
  return in;
}

}  // namespace

double cut_cost(const Tensor<double>& w, const NodeSet& a, const NodeSet& b) {
  require_square(w, "cut_cost");
  const auto in_a = membership(a, w.rows(), "cut_cost");
  const auto in_b = membership(b, w.rows(), "cut_cost");
  for (std::size_t i = 0; i < w.rows(); ++i) {
    if (in_a[i] && in_b[i]) throw ArgumentError("cut_cost: node sets overlap at node " + std::to_string(i));
  }
  double total = 0.0;
  for (std::size_t i = 0; i < w.rows(); ++i) {
    if (!in_a[i]) continue;
    for (std::size_t j = 0; j < w.cols(); ++j)
      if (in_b[j]) total += w(i, j);
  }
  return total;
}

namespace {

void require_partition(const Tensor<double>& w, const NodeSet& a, const NodeSet& b, const char* op) {
  require_square(w, op);
  const auto in_a = membership(a, w.rows(), op);
  const auto in_b = membership(b, w.rows(), op);
  for (std::size_t i = 0; i < w.rows(); ++i) {
    if (in_a[i] && in_b[i]) throw ArgumentError(std::string(op) + ": node sets overlap at node " + std::to_string(i));
    if (!in_a[i] && !in_b[i]) throw ArgumentError(std::string(op) + ": node " + std::to_string(i) + " unassigned");
  }
  if (a.empty() || b.empty()) throw ArgumentError(std::string(op) + ": both sides must be nonempty");
}

NodeSet all_nodes(std::size_t s) {
  NodeSet v(s);
  for (std::size_t i = 0; i < s; ++i) v[i] = i;
  return v;
}

}  // namespace

double ncut_cost(const Tensor<double>& w, const NodeSet& a_in, const NodeSet& b_in) {
  require_partition(w, a_in, b_in, "ncut_cost");
  // Sorted sets with node 0 on the first side, so that the rounding of the
  // result depends only on the partition and not on how it was written down.
  NodeSet a = a_in, b = b_in;
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  if (a.front() > b.front()) std::swap(a, b);
  // Cut(X, V) counts X against every node, itself included.
  const NodeSet v = all_nodes(w.rows());
  double assoc_a = 0.0, assoc_b = 0.0;
  for (auto i : a)
    for (auto j : v) assoc_a += w(i, j);
  for (auto i : b)
    for (auto j : v) assoc_b += w(i, j);
  if (assoc_a == 0.0 || assoc_b == 0.0) {
    throw DegenerateGraphError("ncut_cost: a side has zero association with the graph");
  }
  const double cut = cut_cost(w, a, b);
  return cut / assoc_a + cut / assoc_b;
}

double ncut_cost_indicator(const Tensor<double>& w, const NodeSet& a, const NodeSet& b) {
  require_partition(w, a, b, "ncut_cost_indicator");
  const std::size_t s = w.rows();
  auto indicator = [&](const NodeSet& set) {
    std::vector<double> v(s, 0.0);
    for (auto i : set) v[i] = 1.0;
    return v;
  };
  auto ratio = [&](const std::vector<double>& ind) {
    double quad = 0.0, lin = 0.0;
    for (std::size_t i = 0; i < s; ++i) {
      double wi = 0.0, di = 0.0;
      for (std::size_t j = 0; j < s; ++j) {
        wi += w(i, j) * ind[j];
        di += w(i, j);
      }
      quad += ind[i] * wi;
      lin += ind[i] * di;
    }
    if (lin == 0.0) throw DegenerateGraphError("ncut_cost_indicator: a side has zero association");
    return quad / lin;
  };
  return 2.0 - ratio(indicator(a)) - ratio(indicator(b));
}

double kway_ncut_cost(const Tensor<double>& w, const std::vector<int>& labels, int k) {
  require_square(w, "kway_ncut_cost");
  const std::size_t s = w.rows();
  if (labels.size() != s) throw ArgumentError("kway_ncut_cost: label count does not match node count");
  if (k < 1) throw ArgumentError("kway_ncut_cost: k must be positive");
  if (k == 2) {
    NodeSet a, b;
    for (std::size_t i = 0; i < s; ++i) {
      if (labels[i] != 0 && labels[i] != 1) {
        throw ArgumentError("kway_ncut_cost: label out of range at node " + std::to_string(i));
      }
      (labels[i] == 0 ? a : b).push_back(i);
    }
    if (a.empty() || b.empty()) throw DegenerateGraphError("kway_ncut_cost: a part is empty");
    return ncut_cost(w, a, b);
  }
  std::vector<double> cut(k, 0.0), assoc(k, 0.0);
  for (std::size_t i = 0; i < s; ++i) {
    const int li = labels[i];
    if (li < 0 || li >= k) throw ArgumentError("kway_ncut_cost: label out of range at node " + std::to_string(i));
    for (std::size_t j = 0; j < s; ++j) {
      assoc[li] += w(i, j);
      if (labels[j] != li) cut[li] += w(i, j);
    }
  }
  double total = 0.0;
  for (int c = 0; c < k; ++c) {
    if (assoc[c] == 0.0) {
      throw DegenerateGraphError("kway_ncut_cost: part " + std::to_string(c) + " has zero association");
    }
    total += cut[c] / assoc[c];
  }
  return total;
}

MinCut brute_force_min_ncut(const Tensor<double>& w, int k) {
  require_square(w, "brute_force_min_ncut");
  const std::size_t s = w.rows();
  if (k < 2 || static_cast<std::size_t>(k) > s) {
    throw ArgumentError("brute_force_min_ncut: need 2 <= k <= s, got k=" + std::to_string(k) +
                        ", s=" + std::to_string(s));
  }
  const bool too_large = k == 2 ? s > 12 : std::pow(static_cast<double>(k), static_cast<double>(s)) > 2e6;
  if (too_large) {
    throw SizeError("brute_force_min_ncut: s=" + std::to_string(s) + ", k=" + std::to_string(k) +
                    " is too large for exhaustive search");
  }

  MinCut best;
  best.cost = std::numeric_limits<double>::infinity();
  std::vector<int> labels(s, 0);
  // Restricted growth strings: each set partition is visited exactly once.
  auto visit = [&](auto&& self, std::size_t i, int used) -> void {
    if (s - i < static_cast<std::size_t>(k - used)) return;
    if (i == s) {
      if (used != k) return;
      double cost;
      try {
        cost = kway_ncut_cost(w, labels, k);
      } catch (const DegenerateGraphError&) {
        return;
      }
      if (cost < best.cost) {
        best.cost = cost;
        best.labels = labels;
      }
      return;
    }
    const int limit = std::min(used + 1, k);
    for (int c = 0; c < limit; ++c) {
      labels[i] = c;
      self(self, i + 1, std::max(used, c + 1));
    }
  };
  visit(visit, 0, 0);
  if (best.labels.empty()) throw DegenerateGraphError("brute_force_min_ncut: no non-degenerate partition");
  return best;
}

}  // namespace amnc
