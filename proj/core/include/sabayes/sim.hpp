#pragma once

#include <cstddef>
#include <utility>
#include <vector>

#include "sabayes/model.hpp"
#include "sabayes/numerics.hpp"

namespace sabayes {

/// Generative model for m iid (or per-index) pairs (theta_i, Y_i).
struct GenerativeSpec {
  std::size_t m = 0;
  EffectKind kind = EffectKind::random_effect();
  Prior prior = Prior::flat();
  Likelihood lik = Likelihood::normal_location(1.0);
  /// Non-exchangeable blocks as (count, prior); counts must sum to m.
  std::vector<std::pair<std::size_t, Prior>> non_exchangeable;
};

struct Sample {
  std::vector<double> theta;
  std::vector<double> y;
};

Sample generate(const GenerativeSpec& spec, RngStream& rng);

/// Rejection sampling from the truncated joint distribution, honoring the
/// effect kind: "random" redraws (theta, y); "fixed" draws theta once per
/// realization and redraws y given that same theta until selection; "mixed"
/// fixes lambda and redraws (theta, y).
std::vector<std::pair<double, double>> sample_truncated(
    const GenerativeSpec& spec, const SelectionRule& rule,
    std::size_t target_index, std::size_t n, RngStream& rng);

struct ReplicationStats {
  std::size_t n_reps = 0;
  double mean_R = 0.0, mean_V = 0.0, mean_FDP = 0.0;
  double se_R = 0.0, se_V = 0.0, se_FDP = 0.0;
  bool se_defined = false;
};

struct RepRow {
  std::size_t rep;
  std::size_t R;
  std::size_t V;
  double fdp;
  double cutoff; // realized |y| threshold of the applied rule
};

struct RulePolicy {
  enum class Mode { FixedRule, BhPerRep };
  Mode mode = Mode::FixedRule;
  SelectionRule rule = SelectionRule::two_sided(3.111);
  double bh_q = 0.2;

  static RulePolicy fixed(SelectionRule r);
  static RulePolicy bh(double q);
};

/// Per-replication directional discovery statistics under independent
/// substreams; results are independent of the worker count.
std::vector<RepRow> replicate_rows(const GenerativeSpec& spec,
                                   const RulePolicy& policy,
                                   std::size_t n_reps, const RngStream& rng,
                                   unsigned workers = 1);

ReplicationStats replicate(const GenerativeSpec& spec, const RulePolicy& policy,
                           std::size_t n_reps, const RngStream& rng,
                           unsigned workers = 1);

/// False coverage-statement proportions of four interval constructions for
/// BH-selected parameters: marginal CIs, FCR-adjusted CIs, flat-prior
/// selection-adjusted credible intervals, and random-effect credible
/// intervals (all at the given level).
struct CoverageStats {
  std::size_t n_reps = 0;
  double fcp_unadjusted = 0.0, se_unadjusted = 0.0;
  double fcp_fcr = 0.0, se_fcr = 0.0;
  double fcp_sab_fixed = 0.0, se_sab_fixed = 0.0;
  double fcp_sab_random = 0.0, se_sab_random = 0.0;
};

CoverageStats coverage_replicate(const GenerativeSpec& spec, double bh_q,
                                 double fcr_q, double level, std::size_t n_reps,
                                 const RngStream& rng, unsigned workers = 1);

} // namespace sabayes
