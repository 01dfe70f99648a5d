#include <benchmark/benchmark.h>

#include "sabayes/numerics.hpp"

using namespace sabayes;

static void NormalCdf(benchmark::State& state) {
  double x = 0.0;
  for (auto _ : state) {
    x += 1e-6;
    benchmark::DoNotOptimize(normal_cdf(x - 3.0));
  }
}
BENCHMARK(NormalCdf);

static void NormalQuantile(benchmark::State& state) {
  double p = 0.1;
  for (auto _ : state) {
    p += 1e-7;
    benchmark::DoNotOptimize(normal_quantile(p));
  }
}
BENCHMARK(NormalQuantile);

static void TCdf(benchmark::State& state) {
  double x = 0.0;
  for (auto _ : state) {
    x += 1e-6;
    benchmark::DoNotOptimize(t_cdf(x, 7.02));
  }
}
BENCHMARK(TCdf);

static void TrapezoidIntegrate(benchmark::State& state) {
  const Grid g = Grid::uniform(-10.0, 10.0, state.range(0));
  for (auto _ : state)
    benchmark::DoNotOptimize(integrate([](double x) { return normal_pdf(x); }, g));
  state.SetComplexityN(state.range(0));
}
BENCHMARK(TrapezoidIntegrate)->Range(1001, 64001)->Complexity();

static void RngNormalDraws(benchmark::State& state) {
  RngStream rng(1, 0);
  for (auto _ : state) benchmark::DoNotOptimize(rng.normal());
}
BENCHMARK(RngNormalDraws);
