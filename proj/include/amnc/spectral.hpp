#pragma once

// Classical normalized-cut baseline: normalized Laplacian, cyclic Jacobi
// eigendecomposition and partitioning from the smallest eigenvectors.

#include <cstdint>
#include <vector>

#include "amnc/tensor.hpp"

namespace amnc {

struct LaplacianBundle {
  std::vector<double> degree;  // D_ii = sum_j w_ij
  Tensor<double> laplacian;    // D^{-1/2} (D - W) D^{-1/2}
};

/// W must be symmetric (1e-9) and nonnegative with positive row sums.
/// An isolated node raises DegenerateGraphError naming it.
LaplacianBundle normalized_laplacian(const Tensor<double>& w);

struct EigenDecomposition {
  std::vector<double> values;  // ascending
  Tensor<double> vectors;      // column j pairs with values[j]
  int sweeps = 0;
};

inline constexpr double kJacobiTolerance = 1e-10;
inline constexpr int kJacobiMaxSweeps = 100;

/// Cyclic Jacobi rotations until the largest off-diagonal magnitude drops
/// below kJacobiTolerance or kJacobiMaxSweeps sweeps have run.
EigenDecomposition jacobi_eigendecomposition(const Tensor<double>& m);

struct KMeansResult {
  std::vector<int> labels;
  double inertia = 0.0;
};

/// Lloyd's k-means on the rows of `points` with k-means++ seeding; the best
/// of `restarts` seeded runs (lowest inertia, earliest on ties) wins.
KMeansResult kmeans(const Tensor<double>& points, int k, int restarts, std::uint64_t seed);

inline constexpr int kSpectralRestarts = 20;

/// k = 2: sweep thresholds over D^{-1/2} times the second-smallest eigenvector
/// and keep the split with the lowest NCut. k > 2: row-normalised embedding in
/// the k smallest eigenvectors followed by seeded k-means.
std::vector<int> spectral_partition(const Tensor<double>& w, int k, std::uint64_t seed = 0);

}  // namespace amnc
