#include "amnc/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "amnc/errors.hpp"
#include "amnc/ncut.hpp"
#include "amnc/rng.hpp"

namespace amnc {

namespace {

void require_symmetric(const Tensor<double>& m, const char* op) {
  if (m.rank() != 2 || m.rows() != m.cols()) {
    throw ShapeError(std::string(op) + ": expected a square matrix, got " + shape_string(m.shape()));
  }
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = i + 1; j < m.cols(); ++j)
      if (std::abs(m(i, j) - m(j, i)) > 1e-9) {
        throw ArgumentError(std::string(op) + ": matrix is not symmetric at (" + std::to_string(i) +
                            ", " + std::to_string(j) + ")");
      }
}

}  // namespace

LaplacianBundle normalized_laplacian(const Tensor<double>& w) {
  require_symmetric(w, "normalized_laplacian");
  const std::size_t s = w.rows();
  LaplacianBundle out;
  out.degree.assign(s, 0.0);
  for (std::size_t i = 0; i < s; ++i) {
    for (std::size_t j = 0; j < s; ++j) {
      if (w(i, j) < 0.0) throw ArgumentError("normalized_laplacian: negative affinity");
      out.degree[i] += w(i, j);
    }
    if (out.degree[i] <= 0.0) {
      throw DegenerateGraphError("normalized_laplacian: node " + std::to_string(i) + " is isolated");
    }
  }
  out.laplacian = Tensor<double>({s, s});
  for (std::size_t i = 0; i < s; ++i) {
    for (std::size_t j = 0; j < s; ++j) {
      const double dw = (i == j ? out.degree[i] : 0.0) - w(i, j);
      out.laplacian(i, j) = dw / std::sqrt(out.degree[i] * out.degree[j]);
    }
  }
  return out;
}

EigenDecomposition jacobi_eigendecomposition(const Tensor<double>& m) {
  require_symmetric(m, "jacobi_eigendecomposition");
  const std::size_t n = m.rows();
  Tensor<double> a = m;
  Tensor<double> v = Tensor<double>::identity(n);
  EigenDecomposition out;

  auto off_diagonal = [&] {
    double mx = 0.0;
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) mx = std::max(mx, std::abs(a(p, q)));
    return mx;
  };

  for (; out.sweeps < kJacobiMaxSweeps && off_diagonal() >= kJacobiTolerance; ++out.sweeps) {
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (apq == 0.0) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
        const double t = (theta >= 0.0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a(k, p), akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a(p, k), aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
        a(p, q) = 0.0;
        a(q, p) = 0.0;
        for (std::size_t k = 0; k < n; ++k) {
          const double vkp = v(k, p), vkq = v(k, q);
          v(k, p) = c * vkp - s * vkq;
          v(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return a(x, x) < a(y, y); });
  out.vectors = Tensor<double>({n, n});
  for (std::size_t j = 0; j < n; ++j) {
    out.values.push_back(a(order[j], order[j]));
    for (std::size_t i = 0; i < n; ++i) out.vectors(i, j) = v(i, order[j]);
  }
  return out;
}

namespace {

double squared_distance(const Tensor<double>& pts, std::size_t i, const std::vector<double>& centre) {
  double d = 0.0;
  for (std::size_t c = 0; c < pts.cols(); ++c) {
    const double diff = pts(i, c) - centre[c];
    d += diff * diff;
  }
  return d;
}

KMeansResult kmeans_once(const Tensor<double>& pts, int k, Rng& rng) {
  const std::size_t n = pts.rows(), dim = pts.cols();
  std::vector<std::vector<double>> centres;
  auto row = [&](std::size_t i) { return std::vector<double>(pts.data().begin() + i * dim, pts.data().begin() + (i + 1) * dim); };
  centres.push_back(row(rng.below(n)));
  std::vector<double> nearest(n);
  while (centres.size() < static_cast<std::size_t>(k)) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      nearest[i] = std::numeric_limits<double>::infinity();
      for (const auto& c : centres) nearest[i] = std::min(nearest[i], squared_distance(pts, i, c));
      total += nearest[i];
    }
    std::size_t pick = 0;
    if (total > 0.0) {
      double target = rng.uniform() * total;
      for (pick = 0; pick + 1 < n && target >= nearest[pick]; ++pick) target -= nearest[pick];
    } else {
      pick = rng.below(n);
    }
    centres.push_back(row(pick));
  }

  KMeansResult res;
  res.labels.assign(n, -1);
  for (int iter = 0; iter < 100; ++iter) {
    bool changed = false;
    for (std::size_t i = 0; i < n; ++i) {
      int best = 0;
      double best_d = squared_distance(pts, i, centres[0]);
      for (int c = 1; c < k; ++c) {
        const double d = squared_distance(pts, i, centres[c]);
        if (d < best_d) {
          best_d = d;
          best = c;
        }
      }
      if (res.labels[i] != best) {
        res.labels[i] = best;
        changed = true;
      }
    }
    if (!changed) break;
    std::vector<std::vector<double>> sums(k, std::vector<double>(dim, 0.0));
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
      ++counts[res.labels[i]];
      for (std::size_t c = 0; c < dim; ++c) sums[res.labels[i]][c] += pts(i, c);
    }
    for (int c = 0; c < k; ++c) {
      if (counts[c] == 0) {
        // Empty cluster: restart it at the point farthest from its centre.
        std::size_t far = 0;
        double far_d = -1.0;
        for (std::size_t i = 0; i < n; ++i) {
          const double d = squared_distance(pts, i, centres[res.labels[i]]);
          if (d > far_d) {
            far_d = d;
            far = i;
          }
        }
        centres[c] = row(far);
        continue;
      }
      for (std::size_t j = 0; j < dim; ++j) centres[c][j] = sums[c][j] / static_cast<double>(counts[c]);
    }
  }
  res.inertia = 0.0;
  for (std::size_t i = 0; i < n; ++i) res.inertia += squared_distance(pts, i, centres[res.labels[i]]);
  return res;
}

}  // namespace

KMeansResult kmeans(const Tensor<double>& points, int k, int restarts, std::uint64_t seed) {
  if (points.rank() != 2 || points.rows() == 0) throw ArgumentError("kmeans: no points");
  if (k < 1 || static_cast<std::size_t>(k) > points.rows()) {
    throw ArgumentError("kmeans: k=" + std::to_string(k) + " for " + std::to_string(points.rows()) + " points");
  }
  KMeansResult best;
  best.inertia = std::numeric_limits<double>::infinity();
  for (int r = 0; r < std::max(1, restarts); ++r) {
    Rng rng(Rng::derive(seed, static_cast<std::uint64_t>(r)));
    KMeansResult res = kmeans_once(points, k, rng);
    if (res.inertia < best.inertia) best = std::move(res);
  }
  return best;
}

std::vector<int> spectral_partition(const Tensor<double>& w, int k, std::uint64_t seed) {
  const LaplacianBundle bundle = normalized_laplacian(w);
  const std::size_t s = w.rows();
  if (k < 2 || static_cast<std::size_t>(k) > s) {
    throw ArgumentError("spectral_partition: need 2 <= k <= s, got k=" + std::to_string(k) +
                        ", s=" + std::to_string(s));
  }
  const EigenDecomposition eig = jacobi_eigendecomposition(bundle.laplacian);

  if (k == 2) {
    std::vector<double> y(s);
    for (std::size_t i = 0; i < s; ++i) y[i] = eig.vectors(i, 1) / std::sqrt(bundle.degree[i]);
    std::vector<int> best;
    double best_cost = std::numeric_limits<double>::infinity();
    for (std::size_t t = 0; t < s; ++t) {
      NodeSet low, high;
      for (std::size_t i = 0; i < s; ++i) (y[i] > y[t] ? high : low).push_back(i);
      if (high.empty()) continue;
      double cost;
      try {
        cost = ncut_cost(w, low, high);
      } catch (const DegenerateGraphError&) {
        continue;
      }
      if (cost < best_cost) {
        best_cost = cost;
        best.assign(s, 0);
        for (auto i : high) best[i] = 1;
      }
    }
    if (best.empty()) throw DegenerateGraphError("spectral_partition: no valid threshold split");
    return best;
  }

  Tensor<double> embedding({s, static_cast<std::size_t>(k)});
  for (std::size_t i = 0; i < s; ++i) {
    double norm = 0.0;
    for (int c = 0; c < k; ++c) norm += eig.vectors(i, c) * eig.vectors(i, c);
    norm = std::sqrt(norm);
    for (int c = 0; c < k; ++c) embedding(i, c) = norm > 0.0 ? eig.vectors(i, c) / norm : 0.0;
  }
  return kmeans(embedding, k, kSpectralRestarts, seed).labels;
}

}  // namespace amnc
