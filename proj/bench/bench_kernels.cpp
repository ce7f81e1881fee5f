// Copyright 2026 The dccrn Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
//
// Serial reference kernels against their OpenMP/Eigen counterparts on shapes
// taken from the full model. Run with --benchmark_filter to select.

#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "dccrn/kernels.hpp"

namespace k = dccrn::kernels;

namespace {

std::vector<float> noise(std::size_t n, unsigned seed) {
  std::mt19937 rng(seed);
  std::uniform_real_distribution<float> u(-1.0f, 1.0f);
  std::vector<float> v(n);
  for (float& x : v) x = u(rng);
  return v;
}

struct Serial {
  static constexpr auto gemm = [](auto&&... a) { k::serial::gemm(a...); };
  static constexpr auto conv = [](auto&&... a) { k::serial::conv_forward(a...); };
  static constexpr auto conv_bw = [](auto&&... a) { k::serial::conv_backward_weight(a...); };
  static constexpr auto lstm = [](auto&&... a) { k::serial::lstm_forward(a...); };
};

struct Parallel {
  static constexpr auto gemm = [](auto&&... a) { k::parallel::gemm(a...); };
  static constexpr auto conv = [](auto&&... a) { k::parallel::conv_forward(a...); };
  static constexpr auto conv_bw = [](auto&&... a) { k::parallel::conv_backward_weight(a...); };
  static constexpr auto lstm = [](auto&&... a) { k::parallel::lstm_forward(a...); };
};

// 1 s of frames through a bottleneck-sized projection.
template <typename Impl>
void BM_Gemm(benchmark::State& state) {
  k::GemmDims d{100 * 16, 256, 512, false, false};
  const auto a = noise(d.m * d.k, 1), b = noise(d.k * d.n, 2);
  std::vector<float> c(d.m * d.n);
  for (auto _ : state) {
    Impl::gemm(d, 1.0f, std::span<const float>(a), std::span<const float>(b), 0.0f,
               std::span<float>(c));
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(state.iterations() * 2 * d.m * d.n * d.k);
}

// Second encoder layer over 1 s: 16 -> 32 feature maps, 32 -> 16 bins.
k::ConvGeometry encoder_layer(std::size_t batch) {
  k::ConvGeometry g;
  g.batch = batch;
  g.in_ch = 16;
  g.out_ch = 32;
  g.in_t = g.out_t = 100;
  g.in_f = 32;
  g.out_f = 16;
  g.k_t = 2;
  g.k_f = 5;
  g.stride_f = 2;
  g.pad_t = 1;
  g.pad_f = 2;
  return g;
}

template <typename Impl>
void BM_Conv(benchmark::State& state) {
  const auto g = encoder_layer(static_cast<std::size_t>(state.range(0)));
  const auto x = noise(g.in_size(), 3), w = noise(g.weight_size(), 4);
  std::vector<float> out(g.out_size());
  for (auto _ : state) {
    Impl::conv(g, std::span<const float>(x), std::span<const float>(w), std::span<float>(out));
    benchmark::DoNotOptimize(out.data());
  }
}

template <typename Impl>
void BM_ConvWeightGrad(benchmark::State& state) {
  const auto g = encoder_layer(static_cast<std::size_t>(state.range(0)));
  const auto x = noise(g.in_size(), 5), gout = noise(g.out_size(), 6);
  std::vector<float> gw(g.weight_size());
  for (auto _ : state) {
    Impl::conv_bw(g, std::span<const float>(x), std::span<const float>(gout),
                  std::span<float>(gw));
    benchmark::DoNotOptimize(gw.data());
  }
}

// Time-axis LSTM at the bottleneck: one sequence per bin, 1 s of frames.
template <typename Impl>
void BM_Lstm(benchmark::State& state) {
  k::LstmDims d{static_cast<std::size_t>(state.range(0)), 100, 128, 256, false};
  const std::size_t G = 4 * d.hidden, rows = d.batch * d.steps;
  const auto x = noise(rows * d.input, 7), wx = noise(d.input * G, 8);
  const auto wh = noise(d.hidden * G, 9), bias = noise(G, 10);
  std::vector<float> h(rows * d.hidden), c(rows * d.hidden), gates(rows * G);
  for (auto _ : state) {
    Impl::lstm(d, std::span<const float>(x), std::span<const float>(wx),
               std::span<const float>(wh), std::span<const float>(bias),
               std::span<const float>(), std::span<const float>(), std::span<float>(h),
               std::span<float>(c), std::span<float>(gates));
    benchmark::DoNotOptimize(h.data());
  }
}

}  // namespace

BENCHMARK_TEMPLATE(BM_Gemm, Serial)->Unit(benchmark::kMillisecond);
BENCHMARK_TEMPLATE(BM_Gemm, Parallel)->Unit(benchmark::kMillisecond);
BENCHMARK_TEMPLATE(BM_Conv, Serial)->Arg(1)->Arg(4)->Unit(benchmark::kMillisecond);
BENCHMARK_TEMPLATE(BM_Conv, Parallel)->Arg(1)->Arg(4)->Unit(benchmark::kMillisecond);
BENCHMARK_TEMPLATE(BM_ConvWeightGrad, Serial)->Arg(4)->Unit(benchmark::kMillisecond);
BENCHMARK_TEMPLATE(BM_ConvWeightGrad, Parallel)->Arg(4)->Unit(benchmark::kMillisecond);
BENCHMARK_TEMPLATE(BM_Lstm, Serial)->Arg(16)->Unit(benchmark::kMillisecond);
BENCHMARK_TEMPLATE(BM_Lstm, Parallel)->Arg(16)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
