#pragma once

// Dense inner loops used by the autodiff primitives and the affinity builder.
// Each kernel exists twice: a serial reference and an OpenMP row-parallel
// version. Rows are independent and every output element is produced by the
// same sequence of floating-point operations in both, so the two agree bit for
// bit regardless of the thread count.

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

namespace amnc::kernels {

namespace detail {

template <class T>
inline void matmul_row(std::span<const T> a, std::span<const T> b, std::span<T> out,
                       std::size_t i, std::size_t n, std::size_t p) {
  T* row = out.data() + i * p;
  for (std::size_t j = 0; j < p; ++j) row[j] = T{0};
  for (std::size_t kk = 0; kk < n; ++kk) {
    const T aik = a[i * n + kk];
    const T* brow = b.data() + kk * p;
    for (std::size_t j = 0; j < p; ++j) row[j] += aik * brow[j];
  }
}

template <class T>
inline std::vector<T> inverse_norms(std::span<const T> f, std::size_t s, std::size_t d) {
  std::vector<T> inv(s);
  for (std::size_t i = 0; i < s; ++i) {
    T sq{0};
    for (std::size_t c = 0; c < d; ++c) sq += f[i * d + c] * f[i * d + c];
    inv[i] = sq > T{0} ? T{1} / std::sqrt(sq) : T{0};
  }
  return inv;
}

// Zero-norm patches have inv == 0 and therefore similarity 0 to everything.
template <class T>
inline void cosine_row(std::span<const T> f, const std::vector<T>& inv, std::span<T> out,
                       std::size_t i, std::size_t s, std::size_t d) {
  for (std::size_t j = 0; j < s; ++j) {
    if (j == i) {
      out[i * s + j] = T{0};
      continue;
    }
    T dot{0};
    for (std::size_t c = 0; c < d; ++c) dot += f[i * d + c] * f[j * d + c];
    T w = dot * (inv[i] * inv[j]);
    if (w > T{1}) w = T{1};
    if (w < T{-1}) w = T{-1};
    out[i * s + j] = w;
  }
}

}  // namespace detail

namespace serial {

/// out[m x p] = a[m x n] * b[n x p]
template <class T>
void matmul(std::span<const T> a, std::span<const T> b, std::span<T> out, std::size_t m,
            std::size_t n, std::size_t p) {
  for (std::size_t i = 0; i < m; ++i) detail::matmul_row(a, b, out, i, n, p);
}

/// out[s x s] = pairwise cosine similarity of the s rows of f[s x d], zero diagonal.
template <class T>
void cosine_affinity(std::span<const T> f, std::span<T> out, std::size_t s, std::size_t d) {
  const auto inv = detail::inverse_norms(f, s, d);
  for (std::size_t i = 0; i < s; ++i) detail::cosine_row(f, inv, out, i, s, d);
}

}  // namespace serial

namespace parallel {

template <class T>
void matmul(std::span<const T> a, std::span<const T> b, std::span<T> out, std::size_t m,
            std::size_t n, std::size_t p) {
  const auto rows = static_cast<long long>(m);
#pragma omp parallel for schedule(static) if (m * n * p > 32768)
  for (long long i = 0; i < rows; ++i)
    detail::matmul_row(a, b, out, static_cast<std::size_t>(i), n, p);
}

template <class T>
void cosine_affinity(std::span<const T> f, std::span<T> out, std::size_t s, std::size_t d) {
  const auto inv = detail::inverse_norms(f, s, d);
  const auto rows = static_cast<long long>(s);
#pragma omp parallel for schedule(static) if (s * s * d > 32768)
  for (long long i = 0; i < rows; ++i)
    detail::cosine_row(f, inv, out, static_cast<std::size_t>(i), s, d);
}

}  // namespace parallel

}  // namespace amnc::kernels
