#include <benchmark/benchmark.h>

#include "dgcw/dgcw.hpp"
#include "dgcw/memory.hpp"
#include "dgcw/ops.hpp"
#include "dgcw/rng.hpp"

namespace {

using dgcw::DgcwImpl;
using dgcw::Tensor;

Tensor<float> random_input(std::size_t c, std::size_t side, std::uint64_t seed) {
  dgcw::KeyedRng rng(seed, "bench-input");
  dgcw::Buffer<float> v(c * side * side);
  for (auto& x : v) x = static_cast<float>(rng.uniform(-1, 1));
  return Tensor<float>::from({1, c, side, side}, std::move(v));
}

dgcw::DgcwParams<float> params(std::size_t c) {
  dgcw::DgcwConfig cfg;
  cfg.channels = c;
  cfg.downsample_ratio = 1;
  cfg.zero_init_g2 = false;
  return dgcw::make_dgcw_params<float>(cfg, 1, "bench");
}

// Arguments: grid side (P = side^2), channels.
template <DgcwImpl Impl>
void BM_Forward(benchmark::State& state) {
  const auto side = static_cast<std::size_t>(state.range(0));
  const auto c = static_cast<std::size_t>(state.range(1));
  const auto p = params(c);
  const auto f = random_input(c, side, 2);
  dgcw::NoGradGuard guard;
  std::size_t aux = 0;
  for (auto _ : state) {
    const auto base = dgcw::MemoryTracker::reset_peak();
    auto y = dgcw::dgcw_forward(f, p, Impl);
    benchmark::DoNotOptimize(y.data().data());
    aux = dgcw::MemoryTracker::peak() - base;
  }
  state.counters["P"] = static_cast<double>(side * side);
  state.counters["aux_bytes"] = static_cast<double>(aux);
}

template <DgcwImpl Impl>
void BM_ForwardBackward(benchmark::State& state) {
  const auto side = static_cast<std::size_t>(state.range(0));
  const auto c = static_cast<std::size_t>(state.range(1));
  const auto p = params(c);
  auto f = random_input(c, side, 2);
  f.set_requires_grad(true);
  for (auto _ : state) {
    auto loss = dgcw::sum_all(dgcw::square(dgcw::dgcw_forward(f, p, Impl)));
    dgcw::backward(loss);
    f.zero_grad();
  }
  state.counters["P"] = static_cast<double>(side * side);
}

void Grid(benchmark::internal::Benchmark* b) {
  for (int side : {4, 8, 12, 16})
    for (int c : {16, 32}) b->Args({side, c});
}

}  // namespace

BENCHMARK(BM_Forward<DgcwImpl::Naive>)->Apply(Grid)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_Forward<DgcwImpl::Fused>)->Apply(Grid)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_ForwardBackward<DgcwImpl::Naive>)->Apply(Grid)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_ForwardBackward<DgcwImpl::Fused>)->Apply(Grid)->Unit(benchmark::kMicrosecond);

BENCHMARK_MAIN();
