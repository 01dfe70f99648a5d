#include "sabayes/sim.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "sabayes/errors.hpp"
#include "sabayes/multiplicity.hpp"
#include "sabayes/posterior.hpp"

namespace sabayes {

namespace {

void validate_spec(const GenerativeSpec& spec) {
  if (spec.m == 0) throw DomainError("GenerativeSpec: m must be >= 1");
  if (!spec.lik.is_normal_location())
    throw UnsupportedError("sim: only NormalLocation likelihoods are sampled");
  if (!spec.non_exchangeable.empty()) {
    std::size_t total = 0;
    for (const auto& [count, prior] : spec.non_exchangeable) {
      total += count;
      if (!prior.proper())
        throw DomainError("GenerativeSpec: non-exchangeable priors must be proper");
    }
    if (total != spec.m)
      throw DomainError(
          "GenerativeSpec: non-exchangeable block counts must sum to m");
  } else if (spec.kind.tag() != EffectKind::Tag::Mixed && !spec.prior.proper()) {
    throw DomainError("GenerativeSpec: prior must be proper for sampling");
  }
}

const Prior& prior_at(const GenerativeSpec& spec, std::size_t index) {
  if (spec.non_exchangeable.empty()) return spec.prior;
  std::size_t offset = 0;
  for (const auto& [count, prior] : spec.non_exchangeable) {
    if (index < offset + count) return prior;
    offset += count;
  }
  throw DomainError("GenerativeSpec: index out of range");
}

double draw_theta(const GenerativeSpec& spec, std::size_t index,
                  RngStream& rng) {
  if (spec.kind.tag() == EffectKind::Tag::Mixed &&
      spec.non_exchangeable.empty()) {
    const double lambda = spec.kind.hyperprior().draw(rng);
    return spec.kind.conditional()(lambda).draw(rng);
  }
  return prior_at(spec, index).draw(rng);
}

} // namespace

Sample generate(const GenerativeSpec& spec, RngStream& rng) {
  validate_spec(spec);
  const double sigma = spec.lik.sigma();
  Sample out;
  out.theta.resize(spec.m);
  out.y.resize(spec.m);
  for (std::size_t i = 0; i < spec.m; ++i) {
    out.theta[i] = draw_theta(spec, i, rng);
    out.y[i] = out.theta[i] + sigma * rng.normal();
  }
  return out;
}

std::vector<std::pair<double, double>> sample_truncated(
    const GenerativeSpec& spec, const SelectionRule& rule,
    std::size_t target_index, std::size_t n, RngStream& rng) {
  validate_spec(spec);
  if (target_index >= spec.m)
    throw DomainError("sample_truncated: target index out of range");
  const double sigma = spec.lik.sigma();
  const auto tag = spec.kind.tag();

  std::vector<std::pair<double, double>> out;
  out.reserve(n);
  std::size_t attempts = 0;
  const std::size_t probe_attempts = 2000000;
  auto check_rate = [&]() {
    if (attempts >= probe_attempts && out.size() < attempts / 1000000) {
      std::ostringstream msg;
      msg << "sample_truncated: infeasible truncation, estimated acceptance "
          << static_cast<double>(out.size()) / static_cast<double>(attempts);
      throw NumericError(msg.str());
    }
  };

  while (out.size() < n) {
    switch (tag) {
      case EffectKind::Tag::Random: {
        // redraw (theta, y) jointly until selection
        for (;;) {
          const double theta = prior_at(spec, target_index).draw(rng);
          const double y = theta + sigma * rng.normal();
          ++attempts;
          if (rule.contains(y)) {
            out.emplace_back(theta, y);
            break;
          }
          check_rate();
        }
        break;
      }
      case EffectKind::Tag::Fixed: {
        // theta generated before selection: redraw y given the same theta
        const double theta = prior_at(spec, target_index).draw(rng);
        for (;;) {
          const double y = theta + sigma * rng.normal();
          ++attempts;
          if (rule.contains(y)) {
            out.emplace_back(theta, y);
            break;
          }
          check_rate();
        }
        break;
      }
      case EffectKind::Tag::Mixed: {
        // lambda is fixed; (theta, y) redrawn given lambda until selection
        const double lambda = spec.kind.hyperprior().draw(rng);
        const Prior cond = spec.kind.conditional()(lambda);
        for (;;) {
          const double theta = cond.draw(rng);
          const double y = theta + sigma * rng.normal();
          ++attempts;
          if (rule.contains(y)) {
            out.emplace_back(theta, y);
            break;
          }
          check_rate();
        }
        break;
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Replication harness
// ---------------------------------------------------------------------------

RulePolicy RulePolicy::fixed(SelectionRule r) {
  RulePolicy p;
  p.mode = Mode::FixedRule;
  p.rule = std::move(r);
  return p;
}

RulePolicy RulePolicy::bh(double q) {
  RulePolicy p;
  p.mode = Mode::BhPerRep;
  p.bh_q = q;
  return p;
}

namespace {

struct RepOutcome {
  std::size_t R = 0;
  std::size_t V = 0;
  double cutoff = 0.0;
  std::vector<std::size_t> selected;
};

RepOutcome run_replication(const GenerativeSpec& spec, const RulePolicy& policy,
                           RngStream rng, std::vector<double>* theta_out,
                           std::vector<double>* y_out) {
  const Sample sample = generate(spec, rng);
  const double sigma = spec.lik.sigma();
  RepOutcome out;

  if (policy.mode == RulePolicy::Mode::BhPerRep) {
    std::vector<double> pvalues(sample.y.size());
    for (std::size_t i = 0; i < sample.y.size(); ++i)
      pvalues[i] = 2.0 * (1.0 - normal_cdf(std::fabs(sample.y[i]) / sigma));
    const TestingResult bh = bh_procedure(pvalues, policy.bh_q);
    out.selected = bh.rejected;
    double min_abs = std::numeric_limits<double>::infinity();
    for (std::size_t i : bh.rejected)
      min_abs = std::min(min_abs, std::fabs(sample.y[i]));
    out.cutoff = bh.r > 0 ? min_abs : std::numeric_limits<double>::infinity();
  } else {
    for (std::size_t i = 0; i < sample.y.size(); ++i)
      if (policy.rule.contains(sample.y[i])) out.selected.push_back(i);
    out.cutoff = policy.rule.cutoff();
  }

  out.R = out.selected.size();
  for (std::size_t i : out.selected) {
    const double t = sample.theta[i];
    const double y = sample.y[i];
    if ((y > 0.0 && t < 0.0) || (y < 0.0 && t > 0.0) || t == 0.0) ++out.V;
  }
  if (theta_out) *theta_out = sample.theta;
  if (y_out) *y_out = sample.y;
  return out;
}

struct MeanSe {
  double mean;
  double se;
};

MeanSe mean_se(std::span<const double> xs) {
  const double n = static_cast<double>(xs.size());
  double mean = 0.0;
  for (double x : xs) mean += x;
  mean /= n;
  if (xs.size() < 2) return {mean, std::numeric_limits<double>::quiet_NaN()};
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  return {mean, std::sqrt(ss / (n - 1.0) / n)};
}

} // namespace

std::vector<RepRow> replicate_rows(const GenerativeSpec& spec,
                                   const RulePolicy& policy,
                                   std::size_t n_reps, const RngStream& rng,
                                   unsigned workers) {
  validate_spec(spec);
  if (n_reps == 0) throw DomainError("replicate: n_reps must be >= 1");
  std::vector<RepRow> rows(n_reps);
  parallel_for(n_reps, workers, [&](std::size_t r) {
    const RepOutcome o =
        run_replication(spec, policy, rng.substream(r), nullptr, nullptr);
    rows[r] = RepRow{r, o.R, o.V,
                     static_cast<double>(o.V) /
                         static_cast<double>(std::max<std::size_t>(1, o.R)),
                     o.cutoff};
  });
  return rows;
}

ReplicationStats replicate(const GenerativeSpec& spec, const RulePolicy& policy,
                           std::size_t n_reps, const RngStream& rng,
                           unsigned workers) {
  const std::vector<RepRow> rows = replicate_rows(spec, policy, n_reps, rng, workers);
  std::vector<double> r_vals, v_vals, fdp_vals;
  for (const auto& row : rows) {
    r_vals.push_back(static_cast<double>(row.R));
    v_vals.push_back(static_cast<double>(row.V));
    fdp_vals.push_back(row.fdp);
  }
  const MeanSe r = mean_se(r_vals);
  const MeanSe v = mean_se(v_vals);
  const MeanSe f = mean_se(fdp_vals);
  ReplicationStats stats;
  stats.n_reps = n_reps;
  stats.mean_R = r.mean;
  stats.mean_V = v.mean;
  stats.mean_FDP = f.mean;
  stats.se_R = r.se;
  stats.se_V = v.se;
  stats.se_FDP = f.se;
  stats.se_defined = n_reps >= 2;
  return stats;
}

// ---------------------------------------------------------------------------
// Coverage replication (FCR bands)
// ---------------------------------------------------------------------------

namespace {

/// Credible-interval endpoints tabulated over y and linearly interpolated.
class CredibleBand {
public:
  CredibleBand() = default;

  template <typename PosteriorFn>
  CredibleBand(double y_lo, double y_hi, std::size_t n, double level,
               PosteriorFn&& posterior_at) {
    ys_.resize(n);
    lo_.resize(n);
    hi_.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      ys_[i] = y_lo + (y_hi - y_lo) * static_cast<double>(i) /
                          static_cast<double>(n - 1);
      const Summary s = summarize(posterior_at(ys_[i]), level);
      lo_[i] = s.ci_lo;
      hi_[i] = s.ci_hi;
    }
  }

  bool covers(double y, double theta) const {
    const double lo = interp(lo_, y);
    const double hi = interp(hi_, y);
    return theta >= lo && theta <= hi;
  }

  bool in_range(double y) const {
    return !ys_.empty() && y >= ys_.front() && y <= ys_.back();
  }

private:
  double interp(const std::vector<double>& vals, double y) const {
    const auto it = std::upper_bound(ys_.begin(), ys_.end(), y);
    if (it == ys_.begin()) return vals.front();
    if (it == ys_.end()) return vals.back();
    const std::size_t i = static_cast<std::size_t>(it - ys_.begin());
    const double t = (y - ys_[i - 1]) / (ys_[i] - ys_[i - 1]);
    return vals[i - 1] + t * (vals[i] - vals[i - 1]);
  }

  std::vector<double> ys_, lo_, hi_;
};

} // namespace

CoverageStats coverage_replicate(const GenerativeSpec& spec, double bh_q,
                                 double fcr_q, double level, std::size_t n_reps,
                                 const RngStream& rng, unsigned workers) {
  validate_spec(spec);
  if (!spec.prior.proper())
    throw DomainError("coverage_replicate: proper prior required");
  const double sigma = spec.lik.sigma();
  const double z_marg = normal_quantile(1.0 - 0.5 * (1.0 - level));
  const double band_hi = 17.0 * sigma;

  // Random-effect credible band: selection cancels, one table serves all reps.
  const EffectKind random_kind = EffectKind::random_effect();
  const SelectionRule any_rule = SelectionRule::whole_space();
  CredibleBand random_band(
      2.5 * sigma, band_hi, 360, level, [&](double y) {
        return sa_posterior(random_kind, spec.prior, spec.lik, any_rule, y);
      });
  CredibleBand random_band_neg(
      -band_hi, -2.5 * sigma, 360, level, [&](double y) {
        return sa_posterior(random_kind, spec.prior, spec.lik, any_rule, y);
      });

  struct RepFcp {
    double unadj, fcr, fixed, random;
  };
  std::vector<RepFcp> fcps(n_reps);

  parallel_for(n_reps, workers, [&](std::size_t r) {
    std::vector<double> theta, y;
    RulePolicy policy = RulePolicy::bh(bh_q);
    const RepOutcome o =
        run_replication(spec, policy, rng.substream(r), &theta, &y);
    if (o.R == 0) {
      fcps[r] = RepFcp{0.0, 0.0, 0.0, 0.0};
      return;
    }
    const double z_fcr = normal_quantile(
        1.0 - 0.5 * fcr_q * static_cast<double>(o.R) /
                  static_cast<double>(spec.m));

    // Flat-prior selection-adjusted band for this replication's realized rule.
    const double cutoff = o.cutoff * (1.0 - 1e-9);
    const SelectionRule rep_rule = SelectionRule::two_sided(cutoff);
    const Prior flat = Prior::flat();
    const EffectKind fixed_kind = EffectKind::fixed_effect();
    auto fixed_post = [&](double yy) {
      return sa_posterior(fixed_kind, flat, spec.lik, rep_rule, yy);
    };
    CredibleBand fixed_band(o.cutoff, band_hi, 180, level, fixed_post);
    CredibleBand fixed_band_neg(-band_hi, -o.cutoff, 180, level, fixed_post);

    std::size_t v_unadj = 0, v_fcr = 0, v_fixed = 0, v_random = 0;
    for (std::size_t i : o.selected) {
      const double yi = y[i];
      const double ti = theta[i];
      if (std::fabs(ti - yi) > z_marg * sigma) ++v_unadj;
      if (std::fabs(ti - yi) > z_fcr * sigma) ++v_fcr;

      const CredibleBand& fb = yi >= 0.0 ? fixed_band : fixed_band_neg;
      if (fb.in_range(yi)) {
        if (!fb.covers(yi, ti)) ++v_fixed;
      } else {
        const Summary s = summarize(fixed_post(yi), level);
        if (ti < s.ci_lo || ti > s.ci_hi) ++v_fixed;
      }

      const CredibleBand& rb = yi >= 0.0 ? random_band : random_band_neg;
      if (rb.in_range(yi)) {
        if (!rb.covers(yi, ti)) ++v_random;
      } else {
        const Summary s = summarize(
            sa_posterior(random_kind, spec.prior, spec.lik, any_rule, yi),
            level);
        if (ti < s.ci_lo || ti > s.ci_hi) ++v_random;
      }
    }
    const double R = static_cast<double>(o.R);
    fcps[r] = RepFcp{v_unadj / R, v_fcr / R, v_fixed / R, v_random / R};
  });

  std::vector<double> a, b, c, d;
  for (const auto& f : fcps) {
    a.push_back(f.unadj);
    b.push_back(f.fcr);
    c.push_back(f.fixed);
    d.push_back(f.random);
  }
  const MeanSe ma = mean_se(a), mb = mean_se(b), mc = mean_se(c), md = mean_se(d);
  CoverageStats stats;
  stats.n_reps = n_reps;
  stats.fcp_unadjusted = ma.mean;
  stats.se_unadjusted = ma.se;
  stats.fcp_fcr = mb.mean;
  stats.se_fcr = mb.se;
  stats.fcp_sab_fixed = mc.mean;
  stats.se_sab_fixed = mc.se;
  stats.fcp_sab_random = md.mean;
  stats.se_sab_random = md.se;
  return stats;
}

} // namespace sabayes
