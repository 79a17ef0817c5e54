#include <benchmark/benchmark.h>

#include <random>

#include "medttt/frequency.hpp"
#include "medttt/tensor.hpp"
#include "medttt/ttt.hpp"

using namespace medttt;

namespace {

Tensor random_tensor(Shape shape, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  std::vector<double> d(shape_size(shape));
  for (auto& v : d) v = dist(rng);
  return Tensor(std::move(shape), std::move(d));
}

void BM_matmul(benchmark::State& state) {
  std::size_t n = std::size_t(state.range(0));
  Tensor a = random_tensor({n, n}, 1);
  Tensor b = random_tensor({n, n}, 2);
  for (auto _ : state) {
    Tensor c = matmul(a, b);
    benchmark::DoNotOptimize(c.values().data());
  }
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_matmul)->RangeMultiplier(2)->Range(16, 128)->Complexity();

void BM_conv2d(benchmark::State& state) {
  std::size_t n = std::size_t(state.range(0));
  Tensor x = random_tensor({8, n, n}, 3);
  Tensor k = random_tensor({8, 8, 3, 3}, 4);
  for (auto _ : state) {
    Tensor y = conv2d(x, k, 1, 1);
    benchmark::DoNotOptimize(y.values().data());
  }
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_conv2d)->RangeMultiplier(2)->Range(16, 64)->Complexity();

void BM_fft2(benchmark::State& state) {
  std::size_t n = std::size_t(state.range(0));
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  Plane p(n, n);
  for (auto& v : p.data) v = dist(rng);
  for (auto _ : state) {
    FrequencyFeatures f = dft2(p);
    benchmark::DoNotOptimize(f.real.data());
  }
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_fft2)->RangeMultiplier(2)->Range(16, 256)->Complexity();

void BM_ttt_minibatch(benchmark::State& state) {
  std::size_t t = std::size_t(state.range(0));
  std::size_t d = 16;
  TttConfig cfg;
  cfg.d_model = d;
  cfg.minibatch_b = 16;
  cfg.eta = 0.01;
  TttProjections proj = TttProjections::random(d, 6, 0.3);
  TokenSequence seq;
  for (std::size_t i = 0; i < t; ++i)
    seq.tokens.push_back(random_tensor({d}, 100 + i));
  TttState start = zero_state(cfg);
  for (auto _ : state) {
    auto z = forward_minibatch(seq, cfg, proj, start);
    benchmark::DoNotOptimize(z.data());
  }
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_ttt_minibatch)->RangeMultiplier(4)->Range(256, 4096)->Complexity();

}  // namespace

BENCHMARK_MAIN();
