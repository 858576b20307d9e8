// Serial vs OpenMP matrix kernels at the shapes a 256-wide MLP layer sees.
#include <benchmark/benchmark.h>

#include <vector>

#include "remix/kernels.hpp"
#include "remix/rng.hpp"

namespace {

using Kernel = void (*)(std::span<const double>, std::span<const double>, std::span<double>, std::size_t,
                        std::size_t, std::size_t);

std::vector<double> random_values(std::size_t n, std::uint64_t seed) {
  remix::Rng rng(seed);
  std::vector<double> v(n);
  for (double& x : v) x = rng.normal();
  return v;
}

template <Kernel K>
void run_gemm(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto k = static_cast<std::size_t>(state.range(1));
  const auto m = static_cast<std::size_t>(state.range(2));
  const auto a = random_values(n * k, 1);
  const auto b = random_values(k * m, 2);
  std::vector<double> c(n * m);
  for (auto _ : state) {
    K(a, b, c, n, k, m);
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * n * k * m));
}

template <Kernel K>
void run_gemm_tn(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto k = static_cast<std::size_t>(state.range(1));
  const auto m = static_cast<std::size_t>(state.range(2));
  const auto a = random_values(n * k, 1);
  const auto dc = random_values(n * m, 2);
  std::vector<double> db(k * m);
  for (auto _ : state) {
    K(a, dc, db, n, k, m);
    benchmark::DoNotOptimize(db.data());
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * n * k * m));
}

void shapes(benchmark::internal::Benchmark* b) {
  b->Args({128, 8, 256})->Args({128, 256, 256})->Args({1280, 256, 256})->Args({4096, 2, 256});
}

}  // namespace

BENCHMARK(run_gemm<remix::kernels::serial::gemm_nn>)->Name("gemm_nn/serial")->Apply(shapes);
BENCHMARK(run_gemm<remix::kernels::omp::gemm_nn>)->Name("gemm_nn/omp")->Apply(shapes)->UseRealTime();
BENCHMARK(run_gemm_tn<remix::kernels::serial::gemm_tn_acc>)->Name("gemm_tn_acc/serial")->Apply(shapes);
BENCHMARK(run_gemm_tn<remix::kernels::omp::gemm_tn_acc>)->Name("gemm_tn_acc/omp")->Apply(shapes)->UseRealTime();

BENCHMARK_MAIN();
