#pragma once

#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>

#include "amnc/rng.hpp"
#include "amnc/tensor.hpp"

namespace testing {

template <class T = double>
amnc::Tensor<T> random_matrix(amnc::Rng& rng, std::size_t r, std::size_t c, double lo = -1.0,
                              double hi = 1.0) {
  amnc::Tensor<T> t({r, c});
  for (auto& v : t.data()) v = static_cast<T>(rng.uniform(lo, hi));
  return t;
}

// Symmetric, zero diagonal, entries in [lo, hi].
inline amnc::Tensor<double> random_graph(amnc::Rng& rng, std::size_t s, double lo = 0.0, double hi = 1.0) {
  amnc::Tensor<double> w({s, s});
  for (std::size_t i = 0; i < s; ++i)
    for (std::size_t j = i + 1; j < s; ++j) w(i, j) = w(j, i) = rng.uniform(lo, hi);
  return w;
}

// Rows on the probability simplex.
inline amnc::Tensor<double> random_simplex_rows(amnc::Rng& rng, std::size_t s, std::size_t k) {
  amnc::Tensor<double> p({s, k});
  for (std::size_t i = 0; i < s; ++i) {
    double total = 0.0;
    for (std::size_t c = 0; c < k; ++c) total += p(i, c) = rng.uniform(0.05, 1.0);
    for (std::size_t c = 0; c < k; ++c) p(i, c) /= total;
  }
  return p;
}

// Fresh empty directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    path_ = std::filesystem::temp_directory_path() /
            ("amncut_" + tag + "_" + std::to_string(reinterpret_cast<std::uintptr_t>(this)));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream is(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

}  // namespace testing
