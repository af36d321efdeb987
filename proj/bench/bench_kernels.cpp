// Serial reference kernels against their OpenMP counterparts.

#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "csent/kernels.hpp"

namespace {

namespace k = csent::kernels;

std::vector<float> random_values(std::size_t n, unsigned seed) {
  std::mt19937 rng(seed);
  std::normal_distribution<float> dist(0.0f, 1.0f);
  std::vector<float> v(n);
  for (auto& x : v) x = dist(rng);
  return v;
}

template <auto Gemm>
void BM_gemm(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = random_values(n * n, 1);
  const auto b = random_values(n * n, 2);
  std::vector<float> c(n * n);
  for (auto _ : state) {
    Gemm(false, false, n, n, n, a.data(), b.data(), c.data(), false);
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(2 * n * n * n));
}

template <auto Softmax>
void BM_softmax(benchmark::State& state) {
  const auto rows = static_cast<std::size_t>(state.range(0));
  const std::size_t cols = 512;
  const auto in = random_values(rows * cols, 3);
  std::vector<float> out(in.size());
  for (auto _ : state) {
    Softmax(rows, cols, in.data(), out.data(), nullptr, 1);
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(rows * cols));
}

template <auto LayerNorm>
void BM_layer_norm(benchmark::State& state) {
  const auto rows = static_cast<std::size_t>(state.range(0));
  const std::size_t cols = 256;
  const auto x = random_values(rows * cols, 4);
  const std::vector<float> gamma(cols, 1.0f), beta(cols, 0.0f);
  std::vector<float> out(x.size()), mean(rows), rstd(rows);
  for (auto _ : state) {
    LayerNorm(rows, cols, x.data(), gamma.data(), beta.data(), 1e-5f, out.data(), mean.data(),
              rstd.data());
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(rows * cols));
}

}  // namespace

BENCHMARK(BM_gemm<k::serial::gemm>)->Name("gemm/serial")->Arg(64)->Arg(128)->Arg(256);
BENCHMARK(BM_gemm<k::omp::gemm>)->Name("gemm/omp")->Arg(64)->Arg(128)->Arg(256);
BENCHMARK(BM_softmax<k::serial::softmax_rows>)->Name("softmax/serial")->Arg(256)->Arg(2048);
BENCHMARK(BM_softmax<k::omp::softmax_rows>)->Name("softmax/omp")->Arg(256)->Arg(2048);
BENCHMARK(BM_layer_norm<k::serial::layer_norm_rows>)->Name("layer_norm/serial")->Arg(256)->Arg(2048);
BENCHMARK(BM_layer_norm<k::omp::layer_norm_rows>)->Name("layer_norm/omp")->Arg(256)->Arg(2048);

BENCHMARK_MAIN();
