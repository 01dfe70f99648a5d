#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include <json.hpp>

#include "sabayes/errors.hpp"
#include "sabayes/posterior.hpp"
#include "sabayes/risk.hpp"
#include "support/test_support.hpp"

using namespace sabayes;

namespace {

const Likelihood unit_lik = Likelihood::normal_location(1.0);

// closed-form risk of a two-sided rule under the simulated-example mixture,
// via exponential-normal tail identities
std::pair<double, double> closed_form_risk(double a) {
  double num = 0.0, den = 0.0;
  for (auto [w, lam] : {std::pair{0.9, 10.0}, std::pair{0.1, 1.0}}) {
    const double phi_na = normal_cdf(-a);
    const double t1 =
        std::exp(lam * a + 0.5 * lam * lam + normal_logcdf(-a - lam));
    const double t2 =
        std::exp(0.5 * lam * lam - lam * a + normal_logcdf(a - lam));
    num += w * (phi_na - t1);
    den += w * (2.0 * phi_na - t1 + t2);
  }
  return {num / den, den};
}

double closed_form_rho(double y) {
  double num = 0.0, den = 0.0;
  for (auto [w, lam] : {std::pair{0.9, 10.0}, std::pair{0.1, 1.0}}) {
    const double neg =
        0.5 * lam * std::exp(lam * y + 0.5 * lam * lam + normal_logcdf(-y - lam));
    const double pos =
        0.5 * lam * std::exp(0.5 * lam * lam - lam * y + normal_logcdf(y - lam));
    num += w * neg;
    den += w * (neg + pos);
  }
  return num / den;
}

} // namespace

TEST_CASE("truncated marginal without truncation is the ordinary marginal") {
  const Prior mix = testing::example1_prior();
  const SelectionRule whole = SelectionRule::whole_space();
  const Grid g = prior_quadrature_grid(mix, 1.0);
  // self-normalized marginal: the common prior-discretization factor cancels
  const double prior_norm = integrate([&](double t) { return mix.density(t); }, g);
  for (double y : {0.0, 1.2, 3.4}) {
    const double direct = integrate(
        [&](double t) { return mix.density(t) * normal_pdf(y - t); }, g);
    CHECK(truncated_marginal(mix, unit_lik, whole, y) ==
          doctest::Approx(direct / prior_norm).epsilon(1e-8));
  }
}

TEST_CASE("truncated marginal integrates to one over the selection region") {
  const Prior mix = testing::example1_prior();
  const SelectionRule two = SelectionRule::two_sided(3.111);
  // Richardson-extrapolated trapezoid over one tail, doubled by symmetry
  auto tail_integral = [&](std::size_t n) {
    const Grid g = Grid::uniform(3.111 + 1e-9, 60.0, n);
    return 2.0 * integrate(
                     [&](double y) {
                       return truncated_marginal(mix, unit_lik, two, y);
                     },
                     g);
  };
  const double coarse = tail_integral(1501);
  const double fine = tail_integral(3001);
  const double extrapolated = (4.0 * fine - coarse) / 3.0;
  CHECK(extrapolated == doctest::Approx(1.0).epsilon(1e-6));

  CHECK_THROWS_AS(truncated_marginal(mix, unit_lik, two, 1.0), PreconditionError);
}

TEST_CASE("truncated marginal matches a selected-pair histogram") {
  const Prior mix = testing::example1_prior();
  const SelectionRule two = SelectionRule::two_sided(3.111);
  RngStream rng(987, 2);
  const std::size_t n = 10000000;
  const double lo = 3.1111, hi = 5.3;
  const int bins = 12;
  std::vector<std::size_t> counts(bins, 0);
  std::size_t selected = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double theta = mix.draw(rng);
    const double y = theta + rng.normal();
    if (!two.contains(y)) continue;
    ++selected;
    if (y > lo && y < hi)
      ++counts[static_cast<int>((y - lo) / (hi - lo) * bins)];
  }
  for (int b = 0; b < bins; ++b) {
    const double blo = lo + (hi - lo) * b / bins;
    const double bhi = lo + (hi - lo) * (b + 1) / bins;
    const Grid g = Grid::uniform(blo, bhi, 41);
    const double p = integrate(
        [&](double y) { return truncated_marginal(mix, unit_lik, two, y); }, g);
    const double expected = static_cast<double>(selected) * p;
    const double se = std::sqrt(expected * (1.0 - p));
    CHECK(std::fabs(static_cast<double>(counts[b]) - expected) <= 3.5 * se + 1.0);
  }
}

TEST_CASE("saBayes risk of the simulated-example rules") {
  const Prior mix = testing::example1_prior();
  const Loss dir = Loss::directional();

  const RiskReport r3111 =
      sabayes_risk(mix, unit_lik, SelectionRule::two_sided(3.111), dir, 1e5);
  CHECK(std::fabs(r3111.risk - 0.070) <= 0.005);
  CHECK(r3111.risk ==
        doctest::Approx(closed_form_risk(3.111).first).epsilon(1e-3));
  CHECK(r3111.selection_prob ==
        doctest::Approx(closed_form_risk(3.111).second).epsilon(1e-3));
  CHECK(r3111.expected_discoveries ==
        doctest::Approx(1e5 * r3111.selection_prob).epsilon(1e-10));

  const RiskReport r2915 =
      sabayes_risk(mix, unit_lik, SelectionRule::two_sided(2.915), dir);
  CHECK(std::fabs(r2915.risk - 0.10) <= 0.005);

  // zero loss has zero risk
  CHECK(sabayes_risk(mix, unit_lik, SelectionRule::two_sided(3.111), Loss::zero())
            .risk == 0.0);

  CHECK_THROWS_AS(
      sabayes_risk(Prior::flat(), unit_lik, SelectionRule::two_sided(3.0), dir),
      ConfigError);
}

TEST_CASE("risk report serializes with the exact field set") {
  const RiskReport report = sabayes_risk(
      testing::example1_prior(), unit_lik, SelectionRule::two_sided(3.111),
      Loss::directional(), 1e5);
  const auto j = nlohmann::json::parse(report.to_json());
  std::vector<std::string> keys;
  for (auto it = j.begin(); it != j.end(); ++it) keys.push_back(it.key());
  std::sort(keys.begin(), keys.end());
  const std::vector<std::string> expected = {
      "expected_discoveries", "loss", "risk", "rule", "selection_prob"};
  CHECK(keys == expected);
  CHECK(j["loss"] == "directional");
  CHECK(j["rule"] == "twosided:3.111");
}

TEST_CASE("observation-side risk forms agree (expectation vs ratio)") {
  const Prior mix = testing::example1_prior();
  const Loss dir = Loss::directional();
  for (double a : {3.111, 2.915}) {
    const SelectionRule rule = SelectionRule::two_sided(a);
    const double eq16 =
        sabayes_risk_marginal_form(mix, unit_lik, rule, dir, true);
    const double eq18 =
        sabayes_risk_marginal_form(mix, unit_lik, rule, dir, false);
    CHECK(std::fabs(eq16 - eq18) <= 1e-8);
    // and both agree with the parameter-side evaluation
    const double theta_side = sabayes_risk(mix, unit_lik, rule, dir).risk;
    CHECK(eq18 == doctest::Approx(theta_side).epsilon(1e-3));
  }
}

TEST_CASE("bisection on the risk curve locates the level-0.10 threshold") {
  const double s = find_root(
      [](double a) { return closed_form_risk(a).first - 0.10; }, 2.0, 4.0, 1e-5);
  CHECK(std::fabs(s - 2.915) <= 0.01);
}

TEST_CASE("rule calibration hits the target risk") {
  const Prior mix = testing::example1_prior();
  const Loss dir = Loss::directional();

  const CalibrationResult two =
      calibrate_rule(RuleFamily::TwoSided, mix, unit_lik, dir, 0.10);
  CHECK(std::fabs(two.rule.cutoff() - 2.915) <= 0.01);
  CHECK(std::fabs(two.achieved_risk - 0.10) <= 1e-3);

  // the loss-threshold family resolves to the same observation region here
  const CalibrationResult lt =
      calibrate_rule(RuleFamily::LossThreshold, mix, unit_lik, dir, 0.10, 0.0, 0.5);
  CHECK(std::fabs(lt.achieved_risk - 0.10) <= 1e-3);
  REQUIRE(lt.rule.has_scalar_region());
  const double lt_cutoff = lt.rule.region()[1].lo;
  CHECK(std::fabs(lt_cutoff - two.rule.cutoff()) <= 0.02);

  // maximal-discovery property: matched risk, selection probability no smaller
  const double sel_two =
      sabayes_risk(mix, unit_lik, two.rule, dir).selection_prob;
  const double sel_lt = sabayes_risk(mix, unit_lik, lt.rule, dir).selection_prob;
  CHECK(sel_lt >= sel_two - 1e-6);

  // boundary: targeting the whole-space risk returns (nearly) the whole space
  const double q0 =
      sabayes_risk(mix, unit_lik, SelectionRule::whole_space(), dir).risk;
  const CalibrationResult whole =
      calibrate_rule(RuleFamily::TwoSided, mix, unit_lik, dir, q0);
  CHECK(whole.rule.cutoff() <= 0.05);

  CHECK_THROWS_AS(calibrate_rule(RuleFamily::TwoSided, mix, unit_lik, dir, 0.9),
                  CalibrationError);
}

TEST_CASE("direct posterior-loss cutoff rule resolves by loss inversion") {
  const Prior mix = testing::example1_prior();
  const SelectionRule direct = SelectionRule::loss_threshold("directional", 0.10);
  const SelectionRule resolved = resolve_rule(direct, mix, unit_lik);
  REQUIRE(resolved.has_scalar_region());
  REQUIRE(resolved.region().size() == 2);
  const double c = resolved.region()[1].lo;
  // rho(c) == 0.10 by construction; closed form puts the crossing at 3.437
  CHECK(closed_form_rho(c) == doctest::Approx(0.10).epsilon(1e-3));
  CHECK(std::fabs(c - 3.437) <= 0.02);
  CHECK(std::fabs(resolved.region()[0].hi + c) <= 1e-6); // symmetric
}

TEST_CASE("constant-discovery pFDR identities") {
  const Prior mix = testing::example1_prior();
  const SelectionRule one = SelectionRule::one_sided(3.111);
  const std::vector<Interval> whole_a = {{-1e308, 1e308}};
  CHECK(constant_discovery_pfdr(mix, unit_lik, one, whole_a) == 0.0);

  // identity with the membership-loss risk
  const std::vector<Interval> positive = {{0.0, 1e308}};
  const double pfdr = constant_discovery_pfdr(mix, unit_lik, one, positive);
  const double risk =
      sabayes_risk(mix, unit_lik, one, Loss::membership(positive)).risk;
  CHECK(std::fabs(pfdr - risk) <= 1e-8);

  // dichotomous reduction: matches the two-group closed form
  const Prior tg = Prior::two_group(0.9, Prior::point_mass(2.0));
  const SelectionRule gamma = SelectionRule::one_sided(2.0);
  const std::vector<Interval> alt_region = {{1.0, 3.0}};
  const double reduction =
      constant_discovery_pfdr(tg, unit_lik, gamma, alt_region);
  const double p0 = 1.0 - normal_cdf(2.0);
  const double p1 = 0.5;
  const double mixture_form = 0.9 * p0 / (0.9 * p0 + 0.1 * p1);
  CHECK(std::fabs(reduction - mixture_form) <= 1e-8);
}

TEST_CASE("two-group mixture reports") {
  const Prior f0 = Prior::normal(0.0, 1.0);
  const Prior f1 = Prior::normal(2.0, 1.0);
  const SelectionRule gamma = SelectionRule::one_sided(2.0);

  CHECK(two_group(1.0, f0, f1, gamma).pfdr == 1.0);
  CHECK(two_group(0.0, f0, f1, gamma).pfdr == 0.0);

  const TwoGroupReport report = two_group(0.9, f0, f1, gamma);
  const double p0 = 1.0 - normal_cdf(2.0);
  const double expected = 0.9 * p0 / (0.9 * p0 + 0.1 * 0.5);
  CHECK(report.pfdr == doctest::Approx(expected).epsilon(1e-12));

  // local fdr closed form
  const double y = 2.5;
  const double fdr = report.local_fdr(y);
  const double num = 0.9 * normal_pdf(y);
  const double den = num + 0.1 * normal_pdf(y - 2.0);
  CHECK(fdr == doctest::Approx(num / den).epsilon(1e-12));

  // pFDR is at least the smallest local fdr on the region, and equals the
  // truncated-marginal average of the local fdr (Richardson-refined trapezoid)
  double min_fdr = 1.0;
  for (double t = 2.0; t < 12.0; t += 0.01)
    min_fdr = std::min(min_fdr, report.local_fdr(t));
  CHECK(report.pfdr >= min_fdr);
  auto avg = [&](std::size_t n) {
    const Grid g = Grid::uniform(2.0, 14.0, n);
    const double top = integrate(
        [&](double t) {
          const double m = 0.9 * f0.density(t) + 0.1 * f1.density(t);
          return report.local_fdr(t) * m;
        },
        g);
    const double bottom = integrate(
        [&](double t) { return 0.9 * f0.density(t) + 0.1 * f1.density(t); }, g);
    return std::pair{top, bottom};
  };
  const auto c1 = avg(4001);
  const auto c2 = avg(8001);
  const double top = (4.0 * c2.first - c1.first) / 3.0;
  const double bottom = (4.0 * c2.second - c1.second) / 3.0;
  CHECK(std::fabs(report.pfdr - top / bottom) <= 1e-8);

  // q-value curve is monotone in the one-sided cutoff
  for (std::size_t i = 1; i < report.qvalue_curve.size(); ++i)
    CHECK(report.qvalue_curve[i].second <= report.qvalue_curve[i - 1].second + 1e-12);
}

TEST_CASE("two-group pFDR equals the two-group-null saBayes risk") {
  const Prior tg = Prior::two_group(0.9, Prior::point_mass(2.0));
  const SelectionRule gamma = SelectionRule::one_sided(2.0);
  const double risk =
      sabayes_risk(tg, unit_lik, gamma, Loss::two_group_null()).risk;
  const TwoGroupReport report =
      two_group(0.9, Prior::normal(0.0, 1.0), Prior::normal(2.0, 1.0), gamma);
  CHECK(std::fabs(risk - report.pfdr) <= 1e-8);
}

TEST_CASE("fixed two-group posterior with truncated likelihoods") {
  const Prior f0 = Prior::normal(0.0, 1.0);
  const Prior f1 = Prior::normal(2.0, 1.0);
  const SelectionRule gamma = SelectionRule::one_sided(2.0);

  // equal truncation probabilities cancel the adjustment
  const Prior g0 = Prior::normal(1.0, 1.0);
  const Prior g1 = Prior::normal(1.0, 1.0);
  const double adj = fixed_two_group_posterior(0.35, g0, g1, gamma, 2.5);
  const TwoGroupReport rep = two_group(0.35, g0, g1, gamma);
  CHECK(adj == doctest::Approx(rep.local_fdr(2.5)).epsilon(1e-12));
  CHECK(adj == doctest::Approx(0.35).epsilon(1e-12)); // symmetric f0 == f1

  // closed-form value
  const double p0 = 1.0 - normal_cdf(2.0);
  const double p1 = 1.0 - normal_cdf(0.0);
  const double num = 0.9 * normal_pdf(2.5) / p0;
  const double den = num + 0.1 * normal_pdf(0.5) / p1;
  CHECK(fixed_two_group_posterior(0.9, f0, f1, gamma, 2.5) ==
        doctest::Approx(num / den).epsilon(1e-12));

  CHECK_THROWS_AS(fixed_two_group_posterior(0.9, f0, f1, gamma, 1.0),
                  PreconditionError);
}

TEST_CASE("pFCR of random-effect credible intervals is the nominal level") {
  // Proposition-1 check by Monte Carlo: 0.95 random-theta credible intervals
  // for BH-style selected components have pFCR 0.05.
  const Prior mix = testing::example1_prior();
  const SelectionRule two = SelectionRule::two_sided(3.111);
  const EffectKind random = EffectKind::random_effect();

  // credible-band table over |y|
  const std::size_t nb = 240;
  std::vector<double> ys(nb), lo(nb), hi(nb);
  for (std::size_t i = 0; i < nb; ++i) {
    ys[i] = 3.111 + (10.0 - 3.111) * static_cast<double>(i) / (nb - 1);
    const Summary s = summarize(
        sa_posterior(random, mix, unit_lik, SelectionRule::whole_space(), ys[i]),
        0.95);
    lo[i] = s.ci_lo;
    hi[i] = s.ci_hi;
  }
  auto interp = [&](const std::vector<double>& v, double y) {
    const double pos = (y - ys.front()) / (ys.back() - ys.front()) * (nb - 1);
    const std::size_t i =
        std::min(nb - 2, static_cast<std::size_t>(std::max(0.0, pos)));
    const double t = std::clamp(pos - static_cast<double>(i), 0.0, 1.0);
    return v[i] * (1.0 - t) + v[i + 1] * t;
  };
  auto covers = [&](double y, double theta) {
    const double ya = std::fabs(y);
    double l = interp(lo, ya), h = interp(hi, ya);
    if (y < 0.0) {
      const double nl = -h, nh = -l;
      return theta >= nl && theta <= nh;
    }
    return theta >= l && theta <= h;
  };

  RngStream rng(5551, 9);
  const std::size_t n_reps = 120;
  const std::size_t m = 20000;
  std::vector<double> fcps;
  for (std::size_t rep = 0; rep < n_reps; ++rep) {
    RngStream r = rng.substream(rep);
    std::size_t R = 0, V = 0;
    for (std::size_t i = 0; i < m; ++i) {
      const double theta = mix.draw(r);
      const double y = theta + r.normal();
      if (!two.contains(y) || std::fabs(y) > 10.0) continue;
      ++R;
      if (!covers(y, theta)) ++V;
    }
    fcps.push_back(static_cast<double>(V) /
                   std::max<std::size_t>(1, R));
  }
  const auto stat = testing::mc_mean(fcps);
  CHECK(std::fabs(stat.mean - 0.05) <= 0.005);
}

TEST_CASE("degenerate rules are rejected") {
  const Prior mix = testing::example1_prior();
  const SelectionRule far = SelectionRule::two_sided(0.0).with_region({{1000.0, 1001.0}});
  CHECK_THROWS_AS(truncated_marginal(mix, unit_lik, far, 1000.5), NumericError);
}

TEST_CASE("parametric empirical-Bayes prior fit recovers the mixture") {
  const Prior truth = testing::example1_prior();
  RngStream rng(13579, 0);
  std::vector<double> y(100000);
  for (auto& v : y) v = truth.draw(rng) + rng.normal();

  const Prior fitted = fit_ebayes_prior("laplace2:0.9", y, unit_lik);
  const auto& node = std::get<MixturePrior>(fitted.node().v);
  const double r1 = std::get<LaplacePrior>(node.components[0].second.node().v).rate;
  const double r2 = std::get<LaplacePrior>(node.components[1].second.node().v).rate;
  // the spike rate is weakly identified after convolution with unit noise
  CHECK(r1 >= 6.0);
  CHECK(r1 <= 18.0);
  CHECK(std::fabs(r2 - 1.0) <= 0.15);

  // the fitted prior supports near-identical risk calibration
  const CalibrationResult cal = calibrate_rule(
      RuleFamily::TwoSided, fitted, unit_lik, Loss::directional(), 0.10);
  CHECK(std::fabs(cal.rule.cutoff() - 2.915) <= 0.05);

  // 1-D families
  const Prior lap = fit_ebayes_prior("laplace", y, unit_lik);
  CHECK(std::get<LaplacePrior>(lap.node().v).rate > 0.5);
  std::vector<double> ny(20000);
  RngStream rng2(2468, 0);
  for (auto& v : ny) v = std::sqrt(2.0) * rng2.normal(); // theta ~ N(0,1) + noise
  const Prior nrm = fit_ebayes_prior("normal", ny, unit_lik);
  CHECK(std::fabs(std::get<NormalPrior>(nrm.node().v).var - 1.0) <= 0.05);

  CHECK_THROWS_AS(fit_ebayes_prior("cauchy", y, unit_lik), ConfigError);
}
