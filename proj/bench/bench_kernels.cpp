// Serial reference kernels against the parallel im2col path.

#include <benchmark/benchmark.h>

#include "advnet/kernels.hpp"
#include "advnet/rng.hpp"

using namespace advnet;

namespace {

Tensor<float> filled(Shape shape, std::uint64_t seed) {
  Tensor<float> t(std::move(shape));
  Rng rng(seed);
  for (auto& v : t.data()) v = static_cast<float>(rng.normal());
  return t;
}

void conv_args(benchmark::internal::Benchmark* b) {
  // batch, channels, spatial size
  b->Args({32, 16, 32})->Args({32, 64, 16})->Args({128, 16, 16});
}

void BM_ConvForwardReference(benchmark::State& state) {
  const auto n = std::size_t(state.range(0)), c = std::size_t(state.range(1)), s = std::size_t(state.range(2));
  auto x = filled({n, c, s, s}, 1);
  auto w = filled({c, c, 3, 3}, 2);
  for (auto _ : state) benchmark::DoNotOptimize(kernels::reference::conv2d_forward<float>(x, w, nullptr, 1, 1));
}

void BM_ConvForwardParallel(benchmark::State& state) {
  const auto n = std::size_t(state.range(0)), c = std::size_t(state.range(1)), s = std::size_t(state.range(2));
  auto x = filled({n, c, s, s}, 1);
  auto w = filled({c, c, 3, 3}, 2);
  for (auto _ : state) benchmark::DoNotOptimize(kernels::conv2d_forward<float>(x, w, nullptr, 1, 1));
  state.counters["threads"] = kernels::max_threads();
}

void BM_ConvBackwardReference(benchmark::State& state) {
  const auto n = std::size_t(state.range(0)), c = std::size_t(state.range(1)), s = std::size_t(state.range(2));
  auto x = filled({n, c, s, s}, 1);
  auto w = filled({c, c, 3, 3}, 2);
  auto dy = filled({n, c, s, s}, 3);
  for (auto _ : state) benchmark::DoNotOptimize(kernels::reference::conv2d_backward(x, w, dy, 1, 1));
}

void BM_ConvBackwardParallel(benchmark::State& state) {
  const auto n = std::size_t(state.range(0)), c = std::size_t(state.range(1)), s = std::size_t(state.range(2));
  auto x = filled({n, c, s, s}, 1);
  auto w = filled({c, c, 3, 3}, 2);
  auto dy = filled({n, c, s, s}, 3);
  for (auto _ : state)
    benchmark::DoNotOptimize(kernels::conv2d_backward(x, w, dy, 1, 1, true, true, true));
}

}  // namespace

BENCHMARK(BM_ConvForwardReference)->Apply(conv_args)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ConvForwardParallel)->Apply(conv_args)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ConvBackwardReference)->Apply(conv_args)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ConvBackwardParallel)->Apply(conv_args)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
