#include <chrono>
#include <cstdio>
#include <cstring>
#include <string>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "irmae/kernels.hpp"
#include "irmae/rng.hpp"

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point start) {
  return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

std::vector<float> random_vec(std::size_t n, irmae::Rng rng) {
  std::vector<float> v(n);
  for (auto& x : v) x = static_cast<float>(rng.uniform(-1.0, 1.0));
  return v;
}

template <class F>
double best_of(std::size_t repeats, F&& run) {
  double best = 1e300;
  for (std::size_t i = 0; i < repeats; ++i) {
    const auto start = Clock::now();
    run();
    best = std::min(best, ms_since(start));
  }
  return best;
}

void report(const char* name, double serial_ms, double parallel_ms, bool bit_equal) {
  std::printf("%-14s serial %8.2f ms   parallel %8.2f ms   speedup %5.2fx   %s\n", name,
              serial_ms, parallel_ms, serial_ms / parallel_ms,
              bit_equal ? "bit-identical" : "MISMATCH");
}

}  // namespace

int main(int argc, char** argv) {
  std::size_t repeats = 5;
  for (int i = 1; i < argc; ++i) {
    if (std::strcmp(argv[i], "--repeat") == 0 && i + 1 < argc)
      repeats = std::stoul(argv[++i]);
  }
#ifdef _OPENMP
  std::printf("openmp threads: %d, best of %zu runs\n", omp_get_max_threads(), repeats);
#else
  std::printf("openmp disabled, best of %zu runs\n", repeats);
#endif

  const irmae::Rng rng(7);
  using namespace irmae;

  {
    const std::size_t m = 256, k = 256, n = 256;
    const auto a = random_vec(m * k, rng.split("a"));
    const auto b = random_vec(k * n, rng.split("b"));
    std::vector<float> ys(m * n), yp(m * n);
    const double serial = best_of(repeats, [&] {
      kern::ref::matmul_nn(a.data(), b.data(), ys.data(), m, k, n, false);
    });
    const double parallel = best_of(
        repeats, [&] { kern::matmul_nn(a.data(), b.data(), yp.data(), m, k, n, false); });
    report("matmul 256^3", serial, parallel,
           std::memcmp(ys.data(), yp.data(), ys.size() * sizeof(float)) == 0);
  }

  const auto dims = kern::conv_dims(16, 32, 32, 32, 64, 4, 4, 2, 1);
  const auto x = random_vec(dims.n * dims.c * dims.h * dims.w, rng.split("x"));
  const auto w = random_vec(dims.o * dims.c * dims.kh * dims.kw, rng.split("w"));
  const auto gy = random_vec(dims.n * dims.o * dims.oh * dims.ow, rng.split("gy"));

  {
    std::vector<float> ys(gy.size()), yp(gy.size());
    const double serial = best_of(repeats, [&] {
      kern::ref::conv_fwd(x.data(), w.data(), static_cast<const float*>(nullptr), ys.data(), dims, false);
    });
    const double parallel = best_of(repeats, [&] {
      kern::conv_fwd(x.data(), w.data(), static_cast<const float*>(nullptr), yp.data(), dims, false);
    });
    report("conv_fwd", serial, parallel,
           std::memcmp(ys.data(), yp.data(), ys.size() * sizeof(float)) == 0);
  }
  {
    std::vector<float> gs(x.size()), gp(x.size());
    const double serial = best_of(repeats, [&] {
      kern::ref::conv_grad_x(gy.data(), w.data(), gs.data(), dims, false);
    });
    const double parallel = best_of(repeats, [&] {
      kern::conv_grad_x(gy.data(), w.data(), gp.data(), dims, false);
    });
    report("conv_grad_x", serial, parallel,
           std::memcmp(gs.data(), gp.data(), gs.size() * sizeof(float)) == 0);
  }
  {
    std::vector<float> gs(w.size()), gp(w.size());
    const double serial = best_of(repeats, [&] {
      kern::ref::conv_grad_w(x.data(), gy.data(), gs.data(), dims, false);
    });
    const double parallel = best_of(repeats, [&] {
      kern::conv_grad_w(x.data(), gy.data(), gp.data(), dims, false);
    });
    report("conv_grad_w", serial, parallel,
           std::memcmp(gs.data(), gp.data(), gs.size() * sizeof(float)) == 0);
  }
  {
    const std::size_t n = 1 << 22;
    const auto v = random_vec(n, rng.split("v"));
    std::vector<float> ys(n), yp(n);
    const double serial = best_of(repeats, [&] {
      kern::ref::unary_map(kern::Unary::tanh, v.data(), ys.data(), n);
    });
    const double parallel =
        best_of(repeats, [&] { kern::unary_map(kern::Unary::tanh, v.data(), yp.data(), n); });
    report("tanh 4M", serial, parallel,
           std::memcmp(ys.data(), yp.data(), ys.size() * sizeof(float)) == 0);
  }
  {
    const std::size_t n = 1 << 22;
    const auto v = random_vec(n, rng.split("r"));
    double ss = 0, sp = 0;
    const double serial = best_of(repeats, [&] { ss = kern::ref::reduce_sum(v.data(), n); });
    const double parallel = best_of(repeats, [&] { sp = kern::reduce_sum(v.data(), n); });
    report("reduce 4M", serial, parallel, ss == sp);
  }
  return 0;
}
