// Wall-clock comparison of the serial reference kernels and their OpenMP
// versions on cutter-sized problems. Also confirms the outputs are identical.

#include <omp.h>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <string>
#include <tuple>

#include "amnc/kernels.hpp"
#include "amnc/rng.hpp"
#include "amnc/tensor.hpp"

using namespace amnc;

namespace {

Tensor<float> random(Rng& rng, std::size_t r, std::size_t c) {
  Tensor<float> t({r, c});
  for (auto& v : t.data()) v = static_cast<float>(rng.uniform(-1.0, 1.0));
  return t;
}

// Best of `reps` runs in milliseconds.
double time_ms(const std::function<void()>& f, int reps) {
  double best = 1e300;
  for (int i = 0; i < reps; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    f();
    best = std::min(best, std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count());
  }
  return best;
}

void row(const std::string& name, double serial, double parallel, bool same) {
  std::printf("%-28s serial %9.3f ms   openmp %9.3f ms   speedup %5.2fx   %s\n", name.c_str(), serial, parallel,
              serial / parallel, same ? "identical" : "MISMATCH");
}

}  // namespace

int main(int argc, char** argv) {
  const int reps = argc > 1 ? std::atoi(argv[1]) : 5;
  Rng rng(1);
  std::printf("threads: %d\n", omp_get_max_threads());

  for (std::size_t s : {256u, 784u, 1024u}) {
    const std::size_t d = 64;
    const auto f = random(rng, s, d);
    Tensor<float> a({s, s}), b({s, s});
    const double ts = time_ms([&] { kernels::serial::cosine_affinity<float>(f.data(), a.data(), s, d); }, reps);
    const double tp = time_ms([&] { kernels::parallel::cosine_affinity<float>(f.data(), b.data(), s, d); }, reps);
    row("cosine s=" + std::to_string(s) + " d=64", ts, tp, a == b);
  }

  for (auto [m, n, p] : {std::tuple{256u, 64u, 64u}, {784u, 784u, 10u}, {784u, 64u, 784u}}) {
    const auto x = random(rng, m, n), y = random(rng, n, p);
    Tensor<float> a({m, p}), b({m, p});
    const double ts = time_ms([&] { kernels::serial::matmul<float>(x.data(), y.data(), a.data(), m, n, p); }, reps);
    const double tp = time_ms([&] { kernels::parallel::matmul<float>(x.data(), y.data(), b.data(), m, n, p); }, reps);
    row("matmul " + std::to_string(m) + "x" + std::to_string(n) + "x" + std::to_string(p), ts, tp, a == b);
  }
  return 0;
}
