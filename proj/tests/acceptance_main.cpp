// Acceptance suite: runs every acceptance criterion at its stated tolerance
// and prints one PASS/FAIL line per criterion.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "sabayes/config.hpp"
#include "sabayes/microarray.hpp"
#include "sabayes/multiplicity.hpp"
#include "sabayes/posterior.hpp"
#include "sabayes/risk.hpp"
#include "sabayes/sim.hpp"

using namespace sabayes;

namespace {

struct Checker {
  std::vector<std::string> failures;

  void close_to(const char* what, double got, double want, double tol) {
    if (!(std::fabs(got - want) <= tol)) {
      std::ostringstream msg;
      msg << what << "=" << got << " want " << want << " +/- " << tol;
      failures.push_back(msg.str());
    }
  }
  void is_true(const char* what, bool cond) {
    if (!cond) failures.push_back(what);
  }
};

const Likelihood unit_lik = Likelihood::normal_location(1.0);

Prior mixture_prior() {
  return Prior::mixture({{0.9, Prior::laplace(10.0)}, {0.1, Prior::laplace(1.0)}});
}

GenerativeSpec sim_spec(std::size_t m, bool non_exchangeable) {
  GenerativeSpec spec;
  spec.m = m;
  spec.kind = EffectKind::random_effect();
  spec.prior = mixture_prior();
  spec.lik = unit_lik;
  if (non_exchangeable) {
    const std::size_t n1 = (m * 9) / 10;
    spec.non_exchangeable = {{n1, Prior::laplace(10.0)},
                             {m - n1, Prior::laplace(1.0)}};
  }
  return spec;
}

std::string swirl_path() {
  if (const char* env = std::getenv("SABAYES_SWIRL_CSV")) return env;
  for (const char* p : {"tests/data/swirl.csv", "../tests/data/swirl.csv"})
    if (std::ifstream(p).good()) return p;
  return {};
}

// ---------------------------------------------------------------------------

void criterion1(Checker& c) {
  const Prior std_normal = Prior::normal(0.0, 1.0);
  const SelectionRule ge0 = SelectionRule::one_sided(0.0);
  const Summary random = summarize(
      sa_posterior(EffectKind::random_effect(), std_normal, unit_lik, ge0, 1.0),
      0.95);
  const Summary fixed = summarize(
      sa_posterior(EffectKind::fixed_effect(), std_normal, unit_lik, ge0, 1.0),
      0.95);
  const EffectKind mixed_kind = EffectKind::mixed(
      Prior::normal(0.0, 0.5), [](double l) { return Prior::normal(l, 0.5); });
  const Summary mixed =
      summarize(sa_posterior(mixed_kind, std_normal, unit_lik, ge0, 1.0), 0.95);
  c.close_to("random mean", random.mean, 0.5, 0.02);
  c.close_to("fixed mean", fixed.mean, 0.10, 0.02);
  c.close_to("mixed mean", mixed.mean, 0.33, 0.02);
}

void criterion2(Checker& c) {
  c.close_to("random gamma2=1",
             compound_selection_posterior(1.0, {0.0, 2.0}, 4.0,
                                          EffectKind::random_effect())
                 .mean,
             0.4, 0.02);
  const EffectKind mixed_kind = EffectKind::mixed(
      Prior::normal(0.0, 0.5), [](double l) { return Prior::normal(l, 0.5); });
  c.close_to("mixed gamma2=0.5",
             compound_selection_posterior(0.5, {0.0, 2.0}, 4.0, mixed_kind).mean,
             0.384, 0.02);
  c.close_to("fixed gamma2=1",
             compound_selection_posterior(1.0, {0.0, 2.0}, 4.0,
                                          EffectKind::fixed_effect())
                 .mean,
             0.164, 0.02);
  c.close_to("fixed gamma2=0.5",
             compound_selection_posterior(0.5, {0.0, 2.0}, 4.0,
                                          EffectKind::fixed_effect())
                 .mean,
             0.257, 0.02);
}

void criterion3(Checker& c) {
  const Prior mix = mixture_prior();
  const Prior flat = Prior::flat();
  const SelectionRule two = SelectionRule::two_sided(3.111);
  const SelectionRule whole = SelectionRule::whole_space();

  const Summary r34 = summarize(
      sa_posterior(EffectKind::random_effect(), mix, unit_lik, two, 3.40), 0.95);
  c.close_to("random y=3.40 mean", r34.mean, 1.68, 0.02);
  c.close_to("random y=3.40 mode", r34.mode, 2.40, 0.02);
  c.close_to("random y=3.40 ci_lo", r34.ci_lo, -0.11, 0.02);
  c.close_to("random y=3.40 ci_hi", r34.ci_hi, 4.20, 0.02);

  const Summary f34 = summarize(
      sa_posterior(EffectKind::fixed_effect(), flat, unit_lik, two, 3.40), 0.95);
  c.close_to("flat y=3.40 mean", f34.mean, 1.88, 0.02);
  c.close_to("flat y=3.40 mode", f34.mode, 0.74, 0.02);
  c.close_to("flat y=3.40 ci_lo", f34.ci_lo, -0.04, 0.02);
  c.close_to("flat y=3.40 ci_hi", f34.ci_hi, 4.64, 0.02);

  const Summary f56 = summarize(
      sa_posterior(EffectKind::fixed_effect(), flat, unit_lik, two, 5.59), 0.95);
  c.close_to("flat y=5.59 mean", f56.mean, 5.48, 0.02);
  c.close_to("flat y=5.59 mode", f56.mode, 5.57, 0.02);
  c.close_to("flat y=5.59 ci_lo", f56.ci_lo, 3.26, 0.02);
  c.close_to("flat y=5.59 ci_hi", f56.ci_hi, 7.52, 0.02);

  const Summary r56 = summarize(
      sa_posterior(EffectKind::random_effect(), mix, unit_lik, two, 5.59), 0.95);
  c.close_to("random y=5.59 mean", r56.mean, 4.59, 0.02);
  c.close_to("random y=5.59 mode", r56.mode, 4.59, 0.02);
  c.close_to("random y=5.59 ci_lo", r56.ci_lo, 2.62, 0.02);
  c.close_to("random y=5.59 ci_hi", r56.ci_hi, 6.55, 0.02);

  const Summary u34 = summarize(
      sa_posterior(EffectKind::fixed_effect(), flat, unit_lik, whole, 3.40), 0.95);
  c.close_to("unadjusted y=3.40 ci_lo", u34.ci_lo, 1.44, 0.02);
  c.close_to("unadjusted y=3.40 ci_hi", u34.ci_hi, 5.36, 0.02);
  const Summary u56 = summarize(
      sa_posterior(EffectKind::fixed_effect(), flat, unit_lik, whole, 5.59), 0.95);
  c.close_to("unadjusted y=5.59 ci_lo", u56.ci_lo, 3.63, 0.02);
  c.close_to("unadjusted y=5.59 ci_hi", u56.ci_hi, 7.55, 0.02);
}

void criterion4(Checker& c) {
  const SelectionRule one = SelectionRule::one_sided(3.111);
  const PosteriorGrid post =
      sa_posterior(EffectKind::fixed_effect(), Prior::flat(), unit_lik, one, 3.40);
  const Summary s = summarize(post, 0.95);
  c.close_to("one-sided mode", s.mode, 0.19, 0.02);
  c.close_to("one-sided mean", s.mean, -2.87, 0.02);
  c.close_to("one-sided ci_lo", s.ci_lo, -15.41, 0.05);
  c.close_to("one-sided ci_hi", s.ci_hi, 3.91, 0.05);

  const double lhs = post.density_at(-5.87);
  const double rhs = post.density_at(3.40);
  c.is_true("density equality within 1%", std::fabs(lhs - rhs) <= 0.01 * rhs);

  const FreqCi two_ci =
      freq_selective_ci(unit_lik, SelectionRule::two_sided(3.111), 3.40, 0.05);
  c.is_true("two-sided freq CI is one interval", two_ci.intervals.size() == 1);
  c.close_to("freq two-sided lo", two_ci.intervals[0].lo, -0.37, 0.05);
  c.close_to("freq two-sided hi", two_ci.intervals[0].hi, 5.03, 0.05);
  const FreqCi one_ci = freq_selective_ci(unit_lik, one, 3.40, 0.05);
  c.close_to("freq one-sided lo", one_ci.intervals[0].lo, -9.44, 0.05);
  c.close_to("freq one-sided hi", one_ci.intervals[0].hi, 5.03, 0.05);
}

void criterion5(Checker& c) {
  const Prior mix = mixture_prior();
  const Loss dir = Loss::directional();
  const RiskReport r =
      sabayes_risk(mix, unit_lik, SelectionRule::two_sided(3.111), dir);
  c.close_to("risk(3.111)", r.risk, 0.070, 0.005);

  const CalibrationResult cal =
      calibrate_rule(RuleFamily::TwoSided, mix, unit_lik, dir, 0.10);
  c.close_to("calibrated a", cal.rule.cutoff(), 2.915, 0.01);

  auto rho = [&](double y) {
    const PosteriorGrid post = sa_posterior(EffectKind::random_effect(), mix,
                                            unit_lik, SelectionRule::whole_space(), y);
    return posterior_expected_loss(post, dir, y);
  };
  c.close_to("rho(3.111)", rho(3.111), 0.176, 0.005);
  c.close_to("rho(3.472)", rho(3.472), 0.10, 0.005);
}

void criterion6(Checker& c) {
  // The replication source reports E R = 919.9, E V = 64.4, FDP = 0.070,
  // which are the |y| > 3.111 rule's values; the calibrated 2.915 rule has
  // E R = 1242. The bands below therefore pin the 3.111 rule.
  const RulePolicy policy = RulePolicy::fixed(SelectionRule::two_sided(3.111));
  const RngStream rng(660608, 0);
  const ReplicationStats exch = replicate(sim_spec(100000, false), policy, 50, rng);
  const ReplicationStats non =
      replicate(sim_spec(100000, true), policy, 50, rng.substream(17));
  for (const auto* s : {&exch, &non}) {
    const char* tag = s == &exch ? "exchangeable" : "non-exchangeable";
    std::string what;
    what = std::string(tag) + " mean_R";
    c.close_to(what.c_str(), s->mean_R, 919.9, 10.0);
    what = std::string(tag) + " mean_V";
    c.close_to(what.c_str(), s->mean_V, 64.4, 3.0);
    what = std::string(tag) + " mean_FDP";
    c.close_to(what.c_str(), s->mean_FDP, 0.070, 0.005);
  }
  // overlapping 99% confidence intervals between the two specs
  c.is_true("mean_R 99% CIs overlap",
            std::fabs(exch.mean_R - non.mean_R) <=
                2.576 * (exch.se_R + non.se_R));
  c.is_true("mean_V 99% CIs overlap",
            std::fabs(exch.mean_V - non.mean_V) <=
                2.576 * (exch.se_V + non.se_V));
  c.is_true("mean_FDP 99% CIs overlap",
            std::fabs(exch.mean_FDP - non.mean_FDP) <=
                2.576 * (exch.se_FDP + non.se_FDP));
}

void criterion7(Checker& c) {
  const RngStream rng(77077, 0);
  const CoverageStats stats =
      coverage_replicate(sim_spec(100000, false), 0.2, 0.05, 0.95, 50, rng);
  c.close_to("unadjusted FCP", stats.fcp_unadjusted, 0.346, 0.03);
  c.is_true("FCR-adjusted FCP <= 0.06", stats.fcp_fcr <= 0.06);
  c.close_to("flat-fixed saBayes FCP", stats.fcp_sab_fixed, 0.040, 0.015);
  c.close_to("random-theta saBayes FCP", stats.fcp_sab_random, 0.05, 0.01);
}

void criterion8(Checker& c) {
  const EBayesFit fit{4.02, 0.052, 8.5};
  const GeneRecord gene{"6239", -0.435, 0.0173, 4, 3};
  const MicroModel model(fit);

  c.close_to("moderated t", moderated_t(gene, fit), -4.51, 0.01);

  const Summary row1 =
      summarize(model.gene_posterior(gene, std::nullopt, GeneEffectPrior::Flat), 0.95);
  c.close_to("row1 mean", row1.mean, -0.435, 0.02);
  c.close_to("row1 mode", row1.mode, -0.435, 0.02);
  c.close_to("row1 ci_lo", row1.ci_lo, -0.61, 0.02);
  c.close_to("row1 ci_hi", row1.ci_hi, -0.21, 0.02);
  c.close_to("row1 P(mu>0)", row1.tail_prob_pos, 0.0014, 0.02);

  const Summary row2 = summarize(
      model.gene_posterior(gene, MicroRule::modt(4.479), GeneEffectPrior::Laplace),
      0.95);
  c.close_to("row2 mode", row2.mode, -0.36, 0.02);
  c.close_to("row2 mean", row2.mean, -0.31, 0.02);
  c.close_to("row2 ci_lo", row2.ci_lo, -0.54, 0.02);
  c.close_to("row2 ci_hi", row2.ci_hi, -0.01, 0.02);
  c.close_to("row2 P(mu>0)", row2.tail_prob_pos, 0.020, 0.02);

  const Summary row3 = summarize(
      model.gene_posterior(gene, MicroRule::modt(4.479), GeneEffectPrior::Flat),
      0.95);
  c.close_to("row3 mode", row3.mode, -0.278, 0.02);
  c.close_to("row3 mean", row3.mean, -0.257, 0.02);
  c.close_to("row3 ci_lo", row3.ci_lo, -0.54, 0.02);
  c.close_to("row3 ci_hi", row3.ci_hi, 0.02, 0.02);
  c.close_to("row3 P(mu>0)", row3.tail_prob_pos, 0.038, 0.02);

  const Summary row4 = summarize(
      model.gene_posterior(gene, MicroRule::modt(2.64), GeneEffectPrior::Flat),
      0.95);
  c.close_to("row4 mode", row4.mode, -0.419, 0.02);
  c.close_to("row4 mean", row4.mean, -0.367, 0.02);
  c.close_to("row4 ci_lo", row4.ci_lo, -0.63, 0.02);
  c.close_to("row4 ci_hi", row4.ci_hi, -0.02, 0.02);
  c.close_to("row4 P(mu>0)", row4.tail_prob_pos, 0.017, 0.02);

  c.close_to("risk |t|>4.479", model.risk(MicroRule::modt(4.479)).risk, 0.024,
             0.003);
  c.close_to("calibrated moderated-t cutoff", model.calibrate_modt(0.05), 2.64,
             0.02);
  c.close_to("calibrated loss cutoff", model.calibrate_rho(0.05), 0.088, 0.004);
  c.close_to("raw-t threshold", t_quantile(1.0 - 0.1 / 16896.0, 3.0), 57.10, 0.05);
}

void criterion9(Checker& c, bool& skipped) {
  const std::string path = swirl_path();
  if (path.empty()) {
    skipped = true;
    return;
  }
  const EBayesFit fit{4.02, 0.052, 8.5};
  const IngestReport data = ingest(path);
  c.is_true("8448 records", data.records.size() == 8448);
  const TestingResult bh = bh_on_moderated(data.records, fit, 0.1);
  c.close_to("BH discoveries", static_cast<double>(bh.r), 245.0, 2.45);
  c.close_to("modt 2.64 discoveries",
             static_cast<double>(
                 count_discoveries(data.records, MicroRule::modt(2.64), fit)),
             1124.0, 11.24);
  c.close_to("rho 0.05 discoveries",
             static_cast<double>(
                 count_discoveries(data.records, MicroRule::rho(0.05), fit)),
             559.0, 5.59);
  c.close_to("rho 0.088 discoveries",
             static_cast<double>(
                 count_discoveries(data.records, MicroRule::rho(0.088), fit)),
             1271.0, 12.71);
  c.is_true("raw-t BH finds nothing", bh_on_raw_t(data.records, 0.1).r == 0);
}

void criterion10(Checker& c) {
  const Prior mix = mixture_prior();

  // posterior normalization with exact atoms
  const Prior tg = Prior::two_group(0.3, Prior::normal(2.0, 1.0));
  const PosteriorGrid tg_post = sa_posterior(
      EffectKind::random_effect(), tg, unit_lik, SelectionRule::whole_space(), 1.0);
  double mass = integrate_values(tg_post.density(), tg_post.grid());
  for (const auto& a : tg_post.atoms()) mass += a.mass;
  c.close_to("posterior normalization", mass, 1.0, 1e-6);

  // random-kind selection cancellation
  const PosteriorGrid base = sa_posterior(EffectKind::random_effect(), mix,
                                          unit_lik, SelectionRule::whole_space(), 3.40);
  const PosteriorGrid adj = sa_posterior(EffectKind::random_effect(), mix,
                                         unit_lik, SelectionRule::two_sided(3.111), 3.40);
  bool cancel = true;
  for (double t = -4.0; t <= 8.0; t += 0.11) {
    const double a = base.density_at(t);
    if (a > 1e-12 && std::fabs(a - adj.density_at(t)) > 1e-10 * a) cancel = false;
  }
  c.is_true("random-kind selection cancellation", cancel);

  // mixed degenerate reductions
  {
    const SelectionRule rule = SelectionRule::one_sided(0.5);
    const Prior hyper = Prior::normal(0.0, 1.0);
    const EffectKind deg_cond =
        EffectKind::mixed(hyper, [](double l) { return Prior::point_mass(l); });
    const PosteriorGrid mf = sa_posterior(deg_cond, hyper, unit_lik, rule, 1.3);
    const PosteriorGrid fx =
        sa_posterior(EffectKind::fixed_effect(), hyper, unit_lik, rule, 1.3);
    bool fixed_ok = true;
    for (double t = -3.0; t <= 4.0; t += 0.17) {
      const double a = fx.density_at(t);
      if (a > 1e-10 && std::fabs(mf.density_at(t) - a) > 1e-7 * a) fixed_ok = false;
    }
    c.is_true("mixed->fixed reduction", fixed_ok);

    const EffectKind point_hyper = EffectKind::mixed(
        Prior::point_mass(1.5), [](double l) { return Prior::laplace(l); });
    const PosteriorGrid mr =
        sa_posterior(point_hyper, Prior::laplace(1.5), unit_lik, rule, 1.3);
    const PosteriorGrid rd = sa_posterior(EffectKind::random_effect(),
                                          Prior::laplace(1.5), unit_lik, rule, 1.3);
    bool rand_ok = true;
    for (double t = -3.0; t <= 4.0; t += 0.17) {
      const double a = rd.density_at(t);
      if (a > 1e-10 && std::fabs(mr.density_at(t) - a) > 1e-6 * a) rand_ok = false;
    }
    c.is_true("mixed->random reduction", rand_ok);
  }

  // BH equals the brute-force step-up for m <= 12
  {
    RngStream rng(1010, 0);
    bool bh_ok = true;
    for (int trial = 0; trial < 200; ++trial) {
      const std::size_t m = 1 + static_cast<std::size_t>(rng.uniform() * 12);
      std::vector<double> p(m);
      for (auto& v : p) v = rng.uniform();
      const TestingResult r = bh_procedure(p, 0.2);
      std::vector<double> sorted = p;
      std::sort(sorted.begin(), sorted.end());
      std::size_t k = 0;
      for (std::size_t i = 1; i <= m; ++i)
        if (sorted[i - 1] <= 0.2 * static_cast<double>(i) / m) k = i;
      if (r.r != k) bh_ok = false;
    }
    c.is_true("BH brute-force equivalence", bh_ok);
  }

  // expectation form == ratio form of the selection-region risk
  {
    const double eq16 = sabayes_risk_marginal_form(
        mix, unit_lik, SelectionRule::two_sided(3.111), Loss::directional(), true);
    const double eq18 = sabayes_risk_marginal_form(
        mix, unit_lik, SelectionRule::two_sided(3.111), Loss::directional(), false);
    c.close_to("risk identity", eq16 - eq18, 0.0, 1e-8);
  }

  // constant-discovery pFDR equals the membership-loss risk
  {
    const std::vector<Interval> positive = {{0.0, 1e308}};
    const SelectionRule one = SelectionRule::one_sided(3.111);
    const double a = constant_discovery_pfdr(mix, unit_lik, one, positive);
    const double b =
        sabayes_risk(mix, unit_lik, one, Loss::membership(positive)).risk;
    c.close_to("pFDR identity", a - b, 0.0, 1e-8);
  }

  // two-group pFDR is the truncated-marginal average of the local fdr
  {
    const Prior f0 = Prior::normal(0.0, 1.0);
    const Prior f1 = Prior::normal(2.0, 1.0);
    const TwoGroupReport rep = two_group(0.9, f0, f1, SelectionRule::one_sided(2.0));
    auto parts = [&](std::size_t n) {
      const Grid g = Grid::uniform(2.0, 14.0, n);
      const double top = integrate(
          [&](double t) {
            return rep.local_fdr(t) *
                   (0.9 * f0.density(t) + 0.1 * f1.density(t));
          },
          g);
      const double bottom = integrate(
          [&](double t) { return 0.9 * f0.density(t) + 0.1 * f1.density(t); }, g);
      return std::pair{top, bottom};
    };
    const auto c1 = parts(4001);
    const auto c2 = parts(8001);
    const double avg =
        (4.0 * c2.first - c1.first) / (4.0 * c2.second - c1.second);
    c.close_to("two-group average identity", rep.pfdr - avg, 0.0, 1e-8);
  }

  // seeded outputs do not depend on the worker count
  {
    const RulePolicy policy = RulePolicy::fixed(SelectionRule::two_sided(3.111));
    const RngStream rng(808, 0);
    const auto rows1 = replicate_rows(sim_spec(20000, false), policy, 6, rng, 1);
    const auto rows4 = replicate_rows(sim_spec(20000, false), policy, 6, rng, 4);
    bool same = rows1.size() == rows4.size();
    for (std::size_t i = 0; same && i < rows1.size(); ++i)
      same = rows1[i].R == rows4[i].R && rows1[i].V == rows4[i].V &&
             rows1[i].fdp == rows4[i].fdp;
    c.is_true("worker-count invariance", same);
  }
}

} // namespace

int main() {
  struct Entry {
    int id;
    const char* name;
    std::function<void(Checker&, bool&)> run;
    double budget_seconds; // 0 = no stated budget
  };
  const std::vector<Entry> entries = {
      {1, "one-sided selection posterior means (random/fixed/mixed)",
       [](Checker& c, bool&) { criterion1(c); }, 1.0},
      {2, "two-compound largest-mean posterior means",
       [](Checker& c, bool&) { criterion2(c); }, 30.0},
      {3, "two-sided selection posterior summaries",
       [](Checker& c, bool&) { criterion3(c); }, 0.0},
      {4, "one-sided flat posterior and frequentist selective CIs",
       [](Checker& c, bool&) { criterion4(c); }, 0.0},
      {5, "directional risk values and rule calibration",
       [](Checker& c, bool&) { criterion5(c); }, 0.0},
      {6, "replication statistics, exchangeable and non-exchangeable",
       [](Checker& c, bool&) { criterion6(c); }, 300.0},
      {7, "false coverage-statement proportions of interval constructions",
       [](Checker& c, bool&) { criterion7(c); }, 0.0},
      {8, "moderated-t analysis with pinned hyperparameters",
       [](Checker& c, bool&) { criterion8(c); }, 120.0},
      {9, "summary-data discovery counts",
       [](Checker& c, bool& skipped) { criterion9(c, skipped); }, 0.0},
      {10, "property suites",
       [](Checker& c, bool&) { criterion10(c); }, 0.0},
  };

  int failures = 0;
  for (const auto& entry : entries) {
    Checker checker;
    bool skipped = false;
    const auto start = std::chrono::steady_clock::now();
    try {
      entry.run(checker, skipped);
    } catch (const std::exception& e) {
      checker.failures.push_back(std::string("exception: ") + e.what());
    }
    const double elapsed =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
            .count();
    if (entry.budget_seconds > 0.0 && elapsed > entry.budget_seconds) {
      std::ostringstream msg;
      msg << "runtime " << elapsed << "s exceeds " << entry.budget_seconds << "s";
      checker.failures.push_back(msg.str());
    }
    if (skipped) {
      std::printf("SKIP criterion %d: %s (dataset not supplied)\n", entry.id,
                  entry.name);
      continue;
    }
    if (checker.failures.empty()) {
      std::printf("PASS criterion %d: %s (%.1fs)\n", entry.id, entry.name,
                  elapsed);
    } else {
      ++failures;
      std::printf("FAIL criterion %d: %s (%.1fs)\n", entry.id, entry.name,
                  elapsed);
      for (const auto& f : checker.failures)
        std::printf("     - %s\n", f.c_str());
    }
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
