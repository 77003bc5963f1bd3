#include <benchmark/benchmark.h>

#include "osplit/kernels.hpp"
#include "osplit/rng.hpp"
#include "osplit/tensor.hpp"

// Serial reference vs OpenMP kernels on protocol-typical shapes.  The two
// implementations share per-element accumulation code, so the speedup here is
// pure loop scheduling with bitwise-identical results.

namespace {

osplit::Tensor random_tensor(std::vector<std::size_t> shape, std::uint64_t seed) {
  osplit::RngStream rng(seed);
  osplit::Tensor t(std::move(shape));
  for (float& v : t.data) v = static_cast<float>(rng.normal());
  return t;
}

void bm_matmul_serial(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  osplit::Tensor a = random_tensor({n, n}, 1), b = random_tensor({n, n}, 2);
  for (auto _ : state) {
    osplit::Tensor c = osplit::serial::matmul(a, b);
    benchmark::DoNotOptimize(c.data.data());
  }
}

void bm_matmul_parallel(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  osplit::Tensor a = random_tensor({n, n}, 1), b = random_tensor({n, n}, 2);
  for (auto _ : state) {
    osplit::Tensor c = osplit::matmul(a, b);
    benchmark::DoNotOptimize(c.data.data());
  }
}

void bm_conv_serial(benchmark::State& state) {
  const auto batch = static_cast<std::size_t>(state.range(0));
  osplit::Tensor in = random_tensor({batch, 4, 16, 16}, 3);
  osplit::Tensor w = random_tensor({8, 4, 3, 3}, 4);
  osplit::Tensor bias = random_tensor({8}, 5);
  for (auto _ : state) {
    osplit::Tensor out = osplit::serial::conv2d_forward(in, w, bias, 1, 1);
    benchmark::DoNotOptimize(out.data.data());
  }
}

void bm_conv_parallel(benchmark::State& state) {
  const auto batch = static_cast<std::size_t>(state.range(0));
  osplit::Tensor in = random_tensor({batch, 4, 16, 16}, 3);
  osplit::Tensor w = random_tensor({8, 4, 3, 3}, 4);
  osplit::Tensor bias = random_tensor({8}, 5);
  for (auto _ : state) {
    osplit::Tensor out = osplit::conv2d_forward(in, w, bias, 1, 1);
    benchmark::DoNotOptimize(out.data.data());
  }
}

}  // namespace

BENCHMARK(bm_matmul_serial)->Arg(64)->Arg(256)->Arg(512);
BENCHMARK(bm_matmul_parallel)->Arg(64)->Arg(256)->Arg(512);
BENCHMARK(bm_conv_serial)->Arg(8)->Arg(64);
BENCHMARK(bm_conv_parallel)->Arg(8)->Arg(64);

BENCHMARK_MAIN();
