// Serial reference kernels against the OpenMP versions on model-sized shapes.
// Arg 0 selects the thread count for the parallel variant.

#include <benchmark/benchmark.h>

#include <cstdint>
#include <random>
#include <vector>

#include "envid/kernels/kernels.hpp"

namespace k = envid::kernels;

namespace {

std::vector<float> random_values(std::size_t n, std::uint32_t seed) {
  std::mt19937 gen(seed);
  std::uniform_real_distribution<float> dist(-1.0f, 1.0f);
  std::vector<float> v(n);
  for (auto& x : v) x = dist(gen);
  return v;
}

// Second conv block: 64 x (32*9) weights against a 48x138 feature map.
constexpr k::GemmShape kConvGemm{64, 48 * 138, 32 * 9};
constexpr k::ImageShape kImage{32, 48, 138};

void BM_GemmReference(benchmark::State& state) {
  const auto a = random_values(kConvGemm.m * kConvGemm.k, 1);
  const auto b = random_values(kConvGemm.k * kConvGemm.n, 2);
  std::vector<float> c(kConvGemm.m * kConvGemm.n);
  for (auto _ : state) {
    k::reference::gemm<float>(k::Trans::kNo, k::Trans::kNo, kConvGemm, a, b, c, false);
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(state.iterations() * 2 * kConvGemm.m * kConvGemm.n * kConvGemm.k);
}

void BM_GemmParallel(benchmark::State& state) {
  k::set_num_threads(static_cast<int>(state.range(0)));
  const auto a = random_values(kConvGemm.m * kConvGemm.k, 1);
  const auto b = random_values(kConvGemm.k * kConvGemm.n, 2);
  std::vector<float> c(kConvGemm.m * kConvGemm.n);
  for (auto _ : state) {
    k::gemm<float>(k::Trans::kNo, k::Trans::kNo, kConvGemm, a, b, c, false);
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(state.iterations() * 2 * kConvGemm.m * kConvGemm.n * kConvGemm.k);
}

void BM_GemmTransposedParallel(benchmark::State& state) {
  k::set_num_threads(static_cast<int>(state.range(0)));
  // Weight gradient shape: dY (m x n) * cols^T.
  const k::GemmShape s{kConvGemm.m, kConvGemm.k, kConvGemm.n};
  const auto a = random_values(s.m * s.k, 3);
  const auto b = random_values(s.n * s.k, 4);
  std::vector<float> c(s.m * s.n);
  for (auto _ : state) {
    k::gemm<float>(k::Trans::kNo, k::Trans::kYes, s, a, b, c, false);
    benchmark::DoNotOptimize(c.data());
  }
}

void BM_GemmTransposedReference(benchmark::State& state) {
  const k::GemmShape s{kConvGemm.m, kConvGemm.k, kConvGemm.n};
  const auto a = random_values(s.m * s.k, 3);
  const auto b = random_values(s.n * s.k, 4);
  std::vector<float> c(s.m * s.n);
  for (auto _ : state) {
    k::reference::gemm<float>(k::Trans::kNo, k::Trans::kYes, s, a, b, c, false);
    benchmark::DoNotOptimize(c.data());
  }
}

void BM_Im2colReference(benchmark::State& state) {
  const auto img = random_values(kImage.size(), 5);
  std::vector<float> cols(kImage.size() * 9);
  for (auto _ : state) {
    k::reference::im2col<float>(kImage, 3, 1, img, cols);
    benchmark::DoNotOptimize(cols.data());
  }
}

void BM_Im2colParallel(benchmark::State& state) {
  k::set_num_threads(static_cast<int>(state.range(0)));
  const auto img = random_values(kImage.size(), 5);
  std::vector<float> cols(kImage.size() * 9);
  for (auto _ : state) {
    k::im2col<float>(kImage, 3, 1, img, cols);
    benchmark::DoNotOptimize(cols.data());
  }
}

void BM_MaxpoolReference(benchmark::State& state) {
  const auto img = random_values(kImage.size(), 6);
  std::vector<float> out(kImage.size() / 4);
  std::vector<std::uint32_t> arg(out.size());
  for (auto _ : state) {
    k::reference::maxpool2x2_forward<float>(kImage, img, out, arg);
    benchmark::DoNotOptimize(out.data());
  }
}

void BM_MaxpoolParallel(benchmark::State& state) {
  k::set_num_threads(static_cast<int>(state.range(0)));
  const auto img = random_values(kImage.size(), 6);
  std::vector<float> out(kImage.size() / 4);
  std::vector<std::uint32_t> arg(out.size());
  for (auto _ : state) {
    k::maxpool2x2_forward<float>(kImage, img, out, arg);
    benchmark::DoNotOptimize(out.data());
  }
}

}  // namespace

BENCHMARK(BM_GemmReference)->UseRealTime()->Unit(benchmark::kMillisecond);
BENCHMARK(BM_GemmParallel)->Arg(1)->Arg(2)->Arg(4)->UseRealTime()->Unit(benchmark::kMillisecond);
BENCHMARK(BM_GemmTransposedReference)->UseRealTime()->Unit(benchmark::kMillisecond);
BENCHMARK(BM_GemmTransposedParallel)->Arg(1)->Arg(2)->Arg(4)->UseRealTime()->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Im2colReference)->UseRealTime()->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_Im2colParallel)->Arg(1)->Arg(2)->Arg(4)->UseRealTime()->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_MaxpoolReference)->UseRealTime()->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_MaxpoolParallel)->Arg(1)->Arg(2)->Arg(4)->UseRealTime()->Unit(benchmark::kMicrosecond);

BENCHMARK_MAIN();
