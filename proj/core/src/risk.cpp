#include "sabayes/risk.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include <json.hpp>

#include "sabayes/errors.hpp"

namespace sabayes {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

/// Pr(y in S and the discovery about theta is wrong | theta), with the y-tail
/// probabilities in closed form.
double wrong_selection_mass(const SelectionRule& rule, const Likelihood& lik,
                            const Loss& loss, double theta, bool theta_is_atom) {
  const double sigma = lik.sigma();
  switch (loss.kind()) {
    case Loss::Kind::Zero:
      return 0.0;
    case Loss::Kind::Directional: {
      double neg = 0.0, pos = 0.0;
      for (const auto& iv : rule.region()) {
        if (iv.lo < 0.0)
          neg += normal_interval_mass(iv.lo, std::min(iv.hi, 0.0), theta, sigma);
        if (iv.hi > 0.0)
          pos += normal_interval_mass(std::max(iv.lo, 0.0), iv.hi, theta, sigma);
      }
      if (theta > 0.0) return neg;
      if (theta < 0.0) return pos;
      // theta == 0: an atom's sign claim is always wrong; on the continuous
      // part this is the symmetric limit.
      return theta_is_atom ? neg + pos : 0.5 * (neg + pos);
    }
    case Loss::Kind::Membership: {
      bool inside = false;
      for (const auto& iv : loss.region())
        if (theta >= iv.lo && theta <= iv.hi) inside = true;
      return inside ? 0.0 : selection_probability(rule, lik, theta);
    }
    case Loss::Kind::TwoGroupNull:
      return (theta_is_atom && theta == 0.0)
                 ? selection_probability(rule, lik, theta)
                 : 0.0;
  }
  return 0.0;
}

/// Parameter-side quadrature context reused across rule evaluations.
struct RiskContext {
  const Prior* prior;
  const Likelihood* lik;
  Grid grid;
  std::vector<double> prior_vals; // continuous density at grid nodes
  std::vector<Atom> atoms;

  RiskContext(const Prior& p, const Likelihood& l)
      : prior(&p), lik(&l), grid(prior_quadrature_grid(p, l.sigma())) {
    const auto nodes = grid.nodes();
    const auto w = grid.weights();
    prior_vals.resize(nodes.size());
    double norm = 0.0;
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      prior_vals[i] = p.continuous_density(nodes[i]);
      norm += w[i] * prior_vals[i];
    }
    atoms = p.atoms();
    for (const auto& a : atoms) norm += a.mass;
    // self-normalize the discretized prior so Pr(whole space) is exactly 1
    if (norm > 0.0) {
      for (double& v : prior_vals) v /= norm;
      for (auto& a : atoms) a.mass /= norm;
    }
  }

  double selection_prob(const SelectionRule& rule) const {
    const auto nodes = grid.nodes();
    const auto w = grid.weights();
    double d = 0.0;
    for (std::size_t i = 0; i < nodes.size(); ++i)
      if (prior_vals[i] > 0.0)
        d += w[i] * prior_vals[i] * selection_probability(rule, *lik, nodes[i]);
    for (const auto& a : atoms)
      d += a.mass * selection_probability(rule, *lik, a.location);
    return d;
  }

  double wrong_prob(const SelectionRule& rule, const Loss& loss) const {
    const auto nodes = grid.nodes();
    const auto w = grid.weights();
    double n = 0.0;
    for (std::size_t i = 0; i < nodes.size(); ++i)
      if (prior_vals[i] > 0.0)
        n += w[i] * prior_vals[i] *
             wrong_selection_mass(rule, *lik, loss, nodes[i], false);
    for (const auto& a : atoms)
      n += a.mass * wrong_selection_mass(rule, *lik, loss, a.location, true);
    return n;
  }

  RiskReport report(const SelectionRule& rule, const Loss& loss,
                    double family_size) const {
    const double d = selection_prob(rule);
    if (!(d > 0.0))
      throw NumericError("sabayes_risk: degenerate rule, Pr(S) = 0");
    const double n = wrong_prob(rule, loss);
    const double risk = n / d;
    return RiskReport{rule,         risk, d, family_size * d,
                      loss,         risk, family_size};
  }
};

/// Window of the master grid relevant for one observation (|theta - y| <= 12 sigma).
struct GridWindow {
  std::span<const double> nodes;
  std::span<const double> weights;
  std::size_t offset;
};

GridWindow window_for(const Grid& grid, double y, double sigma) {
  const auto nodes = grid.nodes();
  const double lo = y - 12.0 * sigma;
  const double hi = y + 12.0 * sigma;
  const auto begin = std::lower_bound(nodes.begin(), nodes.end(), lo);
  const auto end = std::upper_bound(nodes.begin(), nodes.end(), hi);
  const std::size_t b = static_cast<std::size_t>(begin - nodes.begin());
  const std::size_t e = static_cast<std::size_t>(end - nodes.begin());
  return GridWindow{nodes.subspan(b, e - b), grid.weights().subspan(b, e - b), b};
}

struct MarginalParts {
  double marginal;   // m(y)
  double loss_mass;  // integral of L * pi * f at y
};

MarginalParts marginal_parts(const RiskContext& ctx, const Loss& loss,
                             double y) {
  const double sigma = ctx.lik->sigma();
  const GridWindow win = window_for(ctx.grid, y, sigma);
  double m = 0.0, lm = 0.0;
  for (std::size_t i = 0; i < win.nodes.size(); ++i) {
    const double pv = ctx.prior_vals[win.offset + i];
    if (pv <= 0.0) continue;
    const double theta = win.nodes[i];
    const double f = normal_pdf((y - theta) / sigma) / sigma;
    const double contrib = win.weights[i] * pv * f;
    m += contrib;
    switch (loss.kind()) {
      case Loss::Kind::Directional:
        if ((y >= 0.0 && theta < 0.0) || (y < 0.0 && theta > 0.0)) lm += contrib;
        break;
      case Loss::Kind::Membership: {
        bool inside = false;
        for (const auto& iv : loss.region())
          if (theta >= iv.lo && theta <= iv.hi) inside = true;
        if (!inside) lm += contrib;
        break;
      }
      default:
        break;
    }
  }
  for (const auto& a : ctx.atoms) {
    const double f = normal_pdf((y - a.location) / sigma) / sigma;
    const double contrib = a.mass * f;
    m += contrib;
    switch (loss.kind()) {
      case Loss::Kind::Directional:
        if ((y >= 0.0 && a.location < 0.0) || (y < 0.0 && a.location > 0.0))
          lm += contrib;
        break;
      case Loss::Kind::Membership: {
        bool inside = false;
        for (const auto& iv : loss.region())
          if (a.location >= iv.lo && a.location <= iv.hi) inside = true;
        if (!inside) lm += contrib;
        break;
      }
      case Loss::Kind::TwoGroupNull:
        if (a.location == 0.0) lm += contrib;
        break;
      default:
        break;
    }
  }
  return MarginalParts{m, lm};
}

/// One y grid per selection interval; disjoint intervals must be integrated
/// separately so the trapezoid never bridges the gap between them.
std::vector<Grid> selection_y_grids(const RiskContext& ctx,
                                    const SelectionRule& rule,
                                    std::size_t nodes_per_interval = 4001) {
  const double sigma = ctx.lik->sigma();
  const Interval hull = ctx.prior->support();
  const double reach_lo = hull.lo - 12.0 * sigma;
  const double reach_hi = hull.hi + 12.0 * sigma;
  std::vector<Grid> grids;
  for (const auto& iv : rule.region()) {
    const double lo = std::max(iv.lo, reach_lo);
    const double hi = std::min(iv.hi, reach_hi);
    if (lo < hi) grids.push_back(Grid::uniform(lo, hi, nodes_per_interval));
  }
  if (grids.empty())
    throw NumericError("selection_y_grids: selection region out of reach");
  return grids;
}

} // namespace

// ---------------------------------------------------------------------------

std::string RiskReport::to_json() const {
  nlohmann::ordered_json j;
  j["rule"] = rule.to_string();
  j["risk"] = risk;
  j["selection_prob"] = selection_prob;
  j["expected_discoveries"] = expected_discoveries;
  j["loss"] = loss.name();
  return j.dump();
}

double truncated_marginal(const Prior& prior, const Likelihood& lik,
                          const SelectionRule& rule, double y) {
  if (!prior.proper())
    throw ConfigError(
        "truncated_marginal: improper prior; fit an empirical-Bayes prior "
        "first");
  if (!rule.contains(y))
    throw PreconditionError("truncated_marginal: y outside the selection region");
  RiskContext ctx(prior, lik);
  const double pr_s = ctx.selection_prob(rule);
  if (!(pr_s > 0.0))
    throw NumericError("truncated_marginal: degenerate rule, Pr(S) = 0");
  return marginal_parts(ctx, Loss::zero(), y).marginal / pr_s;
}

double unadjusted_posterior_loss(const Prior& prior, const Likelihood& lik,
                                 const Loss& loss, double y) {
  if (!prior.proper())
    throw ConfigError("unadjusted_posterior_loss: improper prior");
  RiskContext ctx(prior, lik);
  const MarginalParts parts = marginal_parts(ctx, loss, y);
  if (!(parts.marginal > 0.0))
    throw NumericError("unadjusted_posterior_loss: vanishing marginal at y");
  return parts.loss_mass / parts.marginal;
}

RiskReport sabayes_risk(const Prior& prior, const Likelihood& lik,
                        const SelectionRule& rule, const Loss& loss,
                        double family_size) {
  if (!prior.proper())
    throw ConfigError(
        "sabayes_risk: improper prior; use an empirical-Bayes fit (e.g. the "
        "parametric marginal-likelihood fit) to obtain a proper prior");
  RiskContext ctx(prior, lik);
  const SelectionRule resolved = resolve_rule(rule, prior, lik);
  return ctx.report(resolved, loss, family_size);
}

double sabayes_risk_marginal_form(const Prior& prior, const Likelihood& lik,
                                  const SelectionRule& rule, const Loss& loss,
                                  bool per_y_normalized) {
  if (!prior.proper()) throw ConfigError("sabayes_risk_marginal_form: improper prior");
  RiskContext ctx(prior, lik);
  const SelectionRule resolved = resolve_rule(rule, prior, lik);
  const std::vector<Grid> ygrids = selection_y_grids(ctx, resolved);

  std::vector<double> m, lm, wy;
  for (const Grid& g : ygrids) {
    const auto ys = g.nodes();
    const auto w = g.weights();
    for (std::size_t i = 0; i < ys.size(); ++i) {
      const MarginalParts parts = marginal_parts(ctx, loss, ys[i]);
      m.push_back(parts.marginal);
      lm.push_back(parts.loss_mass);
      wy.push_back(w[i]);
    }
  }
  double pr_s = 0.0;
  for (std::size_t i = 0; i < m.size(); ++i) pr_s += wy[i] * m[i];
  if (!(pr_s > 0.0))
    throw NumericError("sabayes_risk_marginal_form: Pr(S) = 0");

  if (per_y_normalized) {
    // expectation of the per-y posterior loss under m_S
    double acc = 0.0;
    for (std::size_t i = 0; i < m.size(); ++i) {
      if (!(m[i] > 0.0)) continue;
      const double rho = lm[i] / m[i];
      const double m_s = m[i] / pr_s;
      acc += wy[i] * rho * m_s;
    }
    return acc;
  }
  double num = 0.0;
  for (std::size_t i = 0; i < m.size(); ++i) num += wy[i] * lm[i];
  return num / pr_s;
}

// ---------------------------------------------------------------------------
// Rule resolution and calibration
// ---------------------------------------------------------------------------

namespace {

std::vector<Interval> region_for_loss_cutoff(const RiskContext& ctx,
                                             const Loss& loss, double cutoff) {
  auto rho = [&](double y) {
    const MarginalParts parts = marginal_parts(ctx, loss, y);
    if (!(parts.marginal > 0.0)) return 0.0; // vanishing marginal: sure discovery
    return parts.loss_mass / parts.marginal;
  };
  const double sigma = ctx.lik->sigma();
  const Interval hull = ctx.prior->support();
  const double far_hi = hull.hi + 12.0 * sigma;
  const double far_lo = hull.lo - 12.0 * sigma;

  if (rho(0.0) <= cutoff) return {{-kInf, kInf}};

  std::vector<Interval> region;
  if (rho(far_hi) <= cutoff) {
    const double c =
        find_root([&](double y) { return rho(y) - cutoff; }, 0.0, far_hi, 1e-6);
    region.push_back({c, kInf});
  }
  if (rho(far_lo) <= cutoff) {
    const double c =
        find_root([&](double y) { return rho(y) - cutoff; }, far_lo, 0.0, 1e-6);
    region.insert(region.begin(), {-kInf, c});
  }
  if (region.empty())
    throw CalibrationError(
        "resolve_rule: posterior loss never falls below the cutoff");
  return region;
}

} // namespace

SelectionRule resolve_rule(const SelectionRule& rule, const Prior& prior,
                           const Likelihood& lik) {
  if (rule.has_scalar_region()) return rule;
  if (rule.kind() != SelectionRule::Kind::LossThreshold)
    throw UnsupportedError("resolve_rule: cannot resolve rule '" +
                           rule.to_string() + "' against a scalar model");
  RiskContext ctx(prior, lik);
  const Loss loss = Loss::from_name(rule.name());
  return rule.with_region(region_for_loss_cutoff(ctx, loss, rule.cutoff()));
}

CalibrationResult calibrate_rule(RuleFamily family, const Prior& prior,
                                 const Likelihood& lik, const Loss& loss,
                                 double q, double bracket_lo, double bracket_hi,
                                 double tol) {
  if (!prior.proper())
    throw ConfigError("calibrate_rule: improper prior; fit an eBayes prior first");
  RiskContext ctx(prior, lik);

  auto rule_at = [&](double param) -> SelectionRule {
    switch (family) {
      case RuleFamily::TwoSided:
        return SelectionRule::two_sided(param);
      case RuleFamily::OneSided:
        return SelectionRule::one_sided(param);
      case RuleFamily::LossThreshold: {
        SelectionRule r = SelectionRule::loss_threshold(loss.name(), param);
        return r.with_region(region_for_loss_cutoff(ctx, loss, param));
      }
    }
    throw ConfigError("calibrate_rule: unknown family");
  };
  auto risk_at = [&](double param) {
    return ctx.report(rule_at(param), loss, 1.0).risk;
  };

  double lo = bracket_lo;
  double hi = bracket_hi;
  if (family == RuleFamily::LossThreshold) {
    // thresholds on the posterior loss live in (0, rho(0)]
    const MarginalParts at_zero = marginal_parts(ctx, loss, 0.0);
    lo = std::max(bracket_lo, 1e-6);
    hi = std::min(bracket_hi, at_zero.loss_mass / at_zero.marginal);
  }

  // probe the bracket and assert monotonicity before bisecting
  const int n_probe = 50;
  std::vector<double> params(n_probe), risks(n_probe);
  for (int i = 0; i < n_probe; ++i) {
    params[i] = lo + (hi - lo) * static_cast<double>(i) / (n_probe - 1);
    risks[i] = risk_at(params[i]);
  }
  int direction = 0; // +1 increasing, -1 decreasing
  for (int i = 1; i < n_probe; ++i) {
    const double d = risks[i] - risks[i - 1];
    if (std::fabs(d) < 1e-12) continue;
    const int s = d > 0 ? 1 : -1;
    if (direction == 0)
      direction = s;
    else if (direction != s)
      throw CalibrationError(
          "calibrate_rule: risk curve is not monotone over the bracket");
  }

  int bracket = -1;
  for (int i = 1; i < n_probe; ++i) {
    if ((risks[i - 1] - q) * (risks[i] - q) <= 0.0) {
      bracket = i;
      break;
    }
  }
  if (bracket < 0) {
    std::ostringstream msg;
    msg << "calibrate_rule: target risk " << q
        << " not bracketed; achieved range [" << *std::min_element(risks.begin(), risks.end())
        << ", " << *std::max_element(risks.begin(), risks.end()) << "]";
    throw CalibrationError(msg.str());
  }

  double plo = params[bracket - 1];
  double phi = params[bracket];
  double rlo = risks[bracket - 1];
  double best_param = std::fabs(rlo - q) < std::fabs(risks[bracket] - q)
                          ? plo
                          : phi;
  double best_risk = risk_at(best_param);
  for (int iter = 0; iter < 200 && phi - plo > tol; ++iter) {
    const double mid = 0.5 * (plo + phi);
    const double rmid = risk_at(mid);
    if (std::fabs(rmid - q) < std::fabs(best_risk - q)) {
      best_risk = rmid;
      best_param = mid;
    }
    if ((rmid - q) * (rlo - q) <= 0.0) {
      phi = mid;
    } else {
      plo = mid;
      rlo = rmid;
    }
    if (std::fabs(rmid - q) <= 1e-3 && phi - plo <= tol) break;
  }
  return CalibrationResult{rule_at(best_param), best_risk};
}

double constant_discovery_pfdr(const Prior& prior, const Likelihood& lik,
                               const SelectionRule& rule,
                               const std::vector<Interval>& a_marg) {
  if (!prior.proper()) throw ConfigError("constant_discovery_pfdr: improper prior");
  RiskContext ctx(prior, lik);
  const SelectionRule resolved = resolve_rule(rule, prior, lik);
  const auto nodes = ctx.grid.nodes();
  const auto w = ctx.grid.weights();
  auto outside = [&a_marg](double theta) {
    for (const auto& iv : a_marg)
      if (theta >= iv.lo && theta <= iv.hi) return false;
    return true;
  };
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    if (ctx.prior_vals[i] <= 0.0) continue;
    const double ps = selection_probability(resolved, lik, nodes[i]);
    const double contrib = w[i] * ctx.prior_vals[i] * ps;
    den += contrib;
    if (outside(nodes[i])) num += contrib;
  }
  for (const auto& a : ctx.atoms) {
    const double ps = selection_probability(resolved, lik, a.location);
    den += a.mass * ps;
    if (outside(a.location)) num += a.mass * ps;
  }
  if (!(den > 0.0))
    throw NumericError("constant_discovery_pfdr: degenerate rule, Pr(S) = 0");
  return num / den;
}

// ---------------------------------------------------------------------------
// Parametric empirical-Bayes prior fitting
// ---------------------------------------------------------------------------

namespace {

// log marginal density of y for a Laplace(rate) prior under N(theta, sigma^2)
// noise, via the exponential-normal convolution in log space
double laplace_marginal_log(double y, double rate, double sigma) {
  const double s2 = sigma * sigma;
  const double a = rate * y + 0.5 * rate * rate * s2 +
                   normal_logcdf(-(y + rate * s2) / sigma);
  const double b = -rate * y + 0.5 * rate * rate * s2 +
                   normal_logcdf((y - rate * s2) / sigma);
  const double hi = std::max(a, b);
  return std::log(0.5 * rate) + hi + std::log1p(std::exp(std::min(a, b) - hi));
}

double golden_max(const std::function<double(double)>& f, double lo, double hi,
                  double tol) {
  const double gr = 0.6180339887498949;
  double x1 = hi - gr * (hi - lo);
  double x2 = lo + gr * (hi - lo);
  double f1 = f(x1), f2 = f(x2);
  while (hi - lo > tol) {
    if (f1 < f2) {
      lo = x1;
      x1 = x2;
      f1 = f2;
      x2 = lo + gr * (hi - lo);
      f2 = f(x2);
    } else {
      hi = x2;
      x2 = x1;
      f2 = f1;
      x1 = hi - gr * (hi - lo);
      f1 = f(x1);
    }
  }
  return 0.5 * (lo + hi);
}

} // namespace

Prior fit_ebayes_prior(const std::string& family, std::span<const double> y,
                       const Likelihood& lik) {
  if (y.size() < 10)
    throw PreconditionError("fit_ebayes_prior: need at least 10 observations");
  const double sigma = lik.sigma();

  if (family == "laplace") {
    auto loglik = [&](double log_rate) {
      const double rate = std::exp(log_rate);
      double ll = 0.0;
      for (double v : y) ll += laplace_marginal_log(v, rate, sigma);
      return ll;
    };
    const double rate =
        std::exp(golden_max(loglik, std::log(0.05), std::log(100.0), 1e-4));
    return Prior::laplace(rate);
  }
  if (family == "normal") {
    // MLE of the marginal N(0, v + sigma^2) has a closed form
    double ss = 0.0;
    for (double v : y) ss += v * v;
    const double var =
        std::max(1e-8, ss / static_cast<double>(y.size()) - sigma * sigma);
    return Prior::normal(0.0, var);
  }
  if (family.rfind("laplace2:", 0) == 0) {
    const double w = std::stod(family.substr(9));
    if (!(w > 0.0 && w < 1.0))
      throw ConfigError("fit_ebayes_prior: laplace2 weight must lie in (0,1)");
    auto loglik = [&](double lr1, double lr2) {
      const double r1 = std::exp(lr1);
      const double r2 = std::exp(lr2);
      double ll = 0.0;
      for (double v : y) {
        const double a = std::log(w) + laplace_marginal_log(v, r1, sigma);
        const double b = std::log1p(-w) + laplace_marginal_log(v, r2, sigma);
        const double hi = std::max(a, b);
        ll += hi + std::log1p(std::exp(std::min(a, b) - hi));
      }
      return ll;
    };
    // coordinate-wise golden search over the two log rates
    double lr1 = std::log(8.0), lr2 = std::log(1.0);
    for (int sweep = 0; sweep < 12; ++sweep) {
      lr1 = golden_max([&](double x) { return loglik(x, lr2); },
                       std::log(0.2), std::log(120.0), 1e-3);
      lr2 = golden_max([&](double x) { return loglik(lr1, x); },
                       std::log(0.02), std::log(30.0), 1e-3);
    }
    return Prior::mixture({{w, Prior::laplace(std::exp(lr1))},
                           {1.0 - w, Prior::laplace(std::exp(lr2))}});
  }
  throw ConfigError("fit_ebayes_prior: unknown family '" + family +
                    "' (expected laplace | normal | laplace2:<w>)");
}

// ---------------------------------------------------------------------------
// Two-group specialization
// ---------------------------------------------------------------------------

namespace {

double region_probability(const Prior& density, const SelectionRule& gamma) {
  double p = 0.0;
  for (const auto& iv : gamma.region()) {
    const double hi = std::isinf(iv.hi) ? 1.0 : density.cdf(iv.hi);
    const double lo = std::isinf(iv.lo) ? 0.0 : density.cdf(iv.lo);
    p += hi - lo;
  }
  return std::clamp(p, 0.0, 1.0);
}

double pfdr_value(double pi0, double p0, double p1) {
  if (pi0 >= 1.0) return 1.0;
  if (pi0 <= 0.0) return 0.0;
  const double num = pi0 * p0;
  const double den = num + (1.0 - pi0) * p1;
  if (!(den > 0.0))
    throw NumericError("two_group: rejection region has zero probability");
  return num / den;
}

} // namespace

TwoGroupReport two_group(double pi0, const Prior& f0, const Prior& f1,
                         const SelectionRule& gamma) {
  if (!(pi0 >= 0.0 && pi0 <= 1.0))
    throw DomainError("two_group: pi0 must lie in [0,1]");
  if (!f0.proper() || !f1.proper())
    throw PreconditionError("two_group: f0 and f1 must be proper densities");

  const double p0 = region_probability(f0, gamma);
  const double p1 = region_probability(f1, gamma);

  TwoGroupReport report;
  report.pfdr = pfdr_value(pi0, p0, p1);
  report.local_fdr = [pi0, f0, f1](double y) {
    if (pi0 >= 1.0) return 1.0;
    if (pi0 <= 0.0) return 0.0;
    const double num = pi0 * f0.density(y);
    const double den = num + (1.0 - pi0) * f1.density(y);
    return den > 0.0 ? num / den : 1.0;
  };

  // q-value curve over the nested one-parameter family of the same shape
  const double c0 = gamma.cutoff();
  const double span = std::max(3.0 * std::fabs(c0), std::fabs(c0) + 6.0);
  const int n_curve = 201;
  for (int i = 0; i < n_curve; ++i) {
    double c;
    SelectionRule nested = gamma;
    switch (gamma.kind()) {
      case SelectionRule::Kind::TwoSided:
        c = span * static_cast<double>(i) / (n_curve - 1);
        nested = SelectionRule::two_sided(c);
        break;
      case SelectionRule::Kind::OneSided:
        c = -span + 2.0 * span * static_cast<double>(i) / (n_curve - 1);
        nested = SelectionRule::one_sided(c);
        break;
      default:
        continue; // no canonical nesting for resolved loss regions
    }
    report.qvalue_curve.emplace_back(
        c, pfdr_value(pi0, region_probability(f0, nested),
                      region_probability(f1, nested)));
  }
  return report;
}

double fixed_two_group_posterior(double pi0, const Prior& f0, const Prior& f1,
                                 const SelectionRule& gamma, double y) {
  if (!(pi0 >= 0.0 && pi0 <= 1.0))
    throw DomainError("fixed_two_group_posterior: pi0 must lie in [0,1]");
  if (!gamma.contains(y))
    throw PreconditionError("fixed_two_group_posterior: y outside Gamma");
  if (pi0 >= 1.0) return 1.0;
  if (pi0 <= 0.0) return 0.0;
  const double p0 = region_probability(f0, gamma);
  const double p1 = region_probability(f1, gamma);
  if (!(p0 > 0.0) || !(p1 > 0.0))
    throw NumericError(
        "fixed_two_group_posterior: truncated likelihood undefined, "
        "Pr(Gamma|H=j) = 0");
  const double num = pi0 * f0.density(y) / p0;
  const double den = num + (1.0 - pi0) * f1.density(y) / p1;
  return num / den;
}

} // namespace sabayes
