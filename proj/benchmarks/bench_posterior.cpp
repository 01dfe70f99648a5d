#include <benchmark/benchmark.h>

#include "sabayes/posterior.hpp"

using namespace sabayes;

namespace {

Prior simulated_prior() {
  return Prior::mixture({{0.9, Prior::laplace(10.0)}, {0.1, Prior::laplace(1.0)}});
}

} // namespace

static void FlatFixedPosterior(benchmark::State& state) {
  const Prior flat = Prior::flat();
  const Likelihood lik = Likelihood::normal_location(1.0);
  const SelectionRule rule = SelectionRule::two_sided(3.111);
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        sa_posterior(EffectKind::fixed_effect(), flat, lik, rule, 3.40));
  }
}
BENCHMARK(FlatFixedPosterior);

static void RandomMixturePosterior(benchmark::State& state) {
  const Prior prior = simulated_prior();
  const Likelihood lik = Likelihood::normal_location(1.0);
  const SelectionRule rule = SelectionRule::two_sided(3.111);
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        sa_posterior(EffectKind::random_effect(), prior, lik, rule, 3.40));
  }
}
BENCHMARK(RandomMixturePosterior);

static void SummarizePosterior(benchmark::State& state) {
  const Prior prior = simulated_prior();
  const Likelihood lik = Likelihood::normal_location(1.0);
  const PosteriorGrid post = sa_posterior(
      EffectKind::random_effect(), prior, lik, SelectionRule::two_sided(3.111), 3.40);
  for (auto _ : state) benchmark::DoNotOptimize(summarize(post, 0.95));
}
BENCHMARK(SummarizePosterior);
