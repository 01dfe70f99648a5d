#include <benchmark/benchmark.h>

#include "sabayes/multiplicity.hpp"
#include "sabayes/numerics.hpp"

using namespace sabayes;

static void BhProcedure(benchmark::State& state) {
  RngStream rng(3, 0);
  std::vector<double> pvalues(state.range(0));
  for (auto& p : pvalues) p = rng.uniform();
  for (auto _ : state) benchmark::DoNotOptimize(bh_procedure(pvalues, 0.1));
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BhProcedure)->Range(1024, 131072)->Complexity();

static void FcrIntervals(benchmark::State& state) {
  std::vector<IndexedObs> selected;
  for (std::size_t i = 0; i < 932; ++i)
    selected.push_back({i, 3.2 + 0.001 * static_cast<double>(i), 1.0});
  for (auto _ : state)
    benchmark::DoNotOptimize(fcr_adjusted_cis(selected, 0.05, 100000));
}
BENCHMARK(FcrIntervals);

BENCHMARK_MAIN();
