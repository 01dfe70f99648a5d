#include <benchmark/benchmark.h>

#include "sabayes/risk.hpp"

using namespace sabayes;

namespace {

Prior simulated_prior() {
  return Prior::mixture({{0.9, Prior::laplace(10.0)}, {0.1, Prior::laplace(1.0)}});
}

} // namespace

static void RiskEvaluation(benchmark::State& state) {
  const Prior prior = simulated_prior();
  const Likelihood lik = Likelihood::normal_location(1.0);
  const Loss loss = Loss::directional();
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        sabayes_risk(prior, lik, SelectionRule::two_sided(3.111), loss));
  }
}
BENCHMARK(RiskEvaluation);

static void RuleCalibration(benchmark::State& state) {
  const Prior prior = simulated_prior();
  const Likelihood lik = Likelihood::normal_location(1.0);
  const Loss loss = Loss::directional();
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        calibrate_rule(RuleFamily::TwoSided, prior, lik, loss, 0.10));
  }
}
BENCHMARK(RuleCalibration);
