#include "sabayes/posterior.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "sabayes/errors.hpp"

namespace sabayes {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kLogSqrt2Pi = 0.9189385332046727;

double log_normal_density(double y, double theta, double sigma) {
  const double z = (y - theta) / sigma;
  return -0.5 * z * z - kLogSqrt2Pi - std::log(sigma);
}

/// log Pr(y in S | theta), stable for selection probabilities far below the
/// smallest normal double.
double selection_log_probability(const SelectionRule& rule,
                                 const Likelihood& lik, double theta) {
  const double p = selection_probability(rule, lik, theta);
  if (p > 1e-280) return std::log(p);
  const double sigma = lik.sigma();
  double best = -kInf;
  std::vector<double> logs;
  for (const auto& iv : rule.region()) {
    const double zlo = std::isinf(iv.lo) ? -kInf : (iv.lo - theta) / sigma;
    const double zhi = std::isinf(iv.hi) ? kInf : (iv.hi - theta) / sigma;
    double lm;
    if (std::isinf(zhi)) {
      lm = normal_logcdf(-zlo);
    } else if (std::isinf(zlo)) {
      lm = normal_logcdf(zhi);
    } else if (zlo > 0.0) {
      const double la = normal_logcdf(-zlo);
      const double lb = normal_logcdf(-zhi);
      lm = la + std::log1p(-std::exp(lb - la));
    } else {
      const double la = normal_logcdf(zhi);
      const double lb = normal_logcdf(zlo);
      lm = la + std::log1p(-std::exp(lb - la));
    }
    logs.push_back(lm);
    best = std::max(best, lm);
  }
  if (!std::isfinite(best)) return -kInf;
  double sum = 0.0;
  for (double l : logs) sum += std::exp(l - best);
  return best + std::log(sum);
}

double log_or_neg_inf(double v) {
  return v > 0.0 ? std::log(v) : -kInf;
}

enum class Treatment { Random, Fixed, Mixed };

struct MixedContext {
  // discrete hyper component: (mass, conditional prior, Pr(S|lambda))
  struct DiscretePart {
    double mass;
    Prior conditional;
    double prob_s;
  };
  std::vector<DiscretePart> discrete;
  // continuous hyper component on a lambda grid
  std::optional<Grid> lambda_grid;
  std::vector<Prior> lambda_conditionals;
  std::vector<double> lambda_weight; // w_j * pi2(lambda_j) / Pr(S|lambda_j)
};

MixedContext build_mixed_context(const EffectKind& kind, const Likelihood& lik,
                                 const SelectionRule& rule) {
  MixedContext ctx;
  const Prior& hyper = kind.hyperprior();
  const ConditionalPrior& cond = kind.conditional();

  for (const auto& a : hyper.atoms()) {
    Prior c = cond(a.location);
    if (c.atom_mass() > 0.0)
      throw UnsupportedError(
          "sa_posterior: conditional priors with atoms are not supported in "
          "the mixed effect model");
    const double prob =
        selection_probability_given_hyper(rule, lik, cond, a.location);
    if (!(prob > 0.0))
      throw NumericError("sa_posterior: Pr(S|lambda) vanished at lambda=" +
                         std::to_string(a.location));
    ctx.discrete.push_back({a.mass, std::move(c), prob});
  }
  if (hyper.is_point_mass()) return ctx;

  const Grid lgrid = prior_quadrature_grid(hyper, hyper.min_scale());
  ctx.lambda_grid = lgrid;
  const auto lambdas = lgrid.nodes();
  const auto lweights = lgrid.weights();
  ctx.lambda_conditionals.reserve(lambdas.size());
  ctx.lambda_weight.reserve(lambdas.size());
  for (std::size_t j = 0; j < lambdas.size(); ++j) {
    Prior c = cond(lambdas[j]);
    if (c.atom_mass() > 0.0)
      throw UnsupportedError(
          "sa_posterior: conditional priors with atoms are not supported in "
          "the mixed effect model");
    const double dens = hyper.continuous_density(lambdas[j]);
    double w = 0.0;
    if (dens > 0.0) {
      const double prob =
          selection_probability_given_hyper(rule, lik, cond, lambdas[j]);
      if (!(prob > 0.0))
        throw NumericError("sa_posterior: Pr(S|lambda) vanished at lambda=" +
                           std::to_string(lambdas[j]));
      w = lweights[j] * dens / prob;
    }
    ctx.lambda_conditionals.push_back(std::move(c));
    ctx.lambda_weight.push_back(w);
  }
  return ctx;
}

} // namespace

// ---------------------------------------------------------------------------
// Loss
// ---------------------------------------------------------------------------

Loss Loss::directional() {
  Loss l;
  l.kind_ = Kind::Directional;
  return l;
}

Loss Loss::membership(std::vector<Interval> region) {
  Loss l;
  l.kind_ = Kind::Membership;
  l.region_ = std::move(region);
  return l;
}

Loss Loss::two_group_null() {
  Loss l;
  l.kind_ = Kind::TwoGroupNull;
  return l;
}

Loss Loss::zero() {
  Loss l;
  l.kind_ = Kind::Zero;
  return l;
}

Loss Loss::from_name(const std::string& name) {
  if (name == "directional") return directional();
  if (name == "two_group_null") return two_group_null();
  if (name == "zero") return zero();
  throw ConfigError("Loss::from_name: unknown loss '" + name +
                    "' (expected directional | two_group_null | zero)");
}

std::string Loss::name() const {
  switch (kind_) {
    case Kind::Directional:
      return "directional";
    case Kind::Membership:
      return "membership";
    case Kind::TwoGroupNull:
      return "two_group_null";
    case Kind::Zero:
      return "zero";
  }
  return "unknown";
}

// ---------------------------------------------------------------------------
// PosteriorGrid
// ---------------------------------------------------------------------------

PosteriorGrid::PosteriorGrid(Grid grid, std::vector<double> log_unnormalized,
                             std::vector<std::pair<double, double>> log_atoms,
                             std::vector<double> cusp_points)
    : grid_(std::move(grid)), cusps_(std::move(cusp_points)) {
  if (log_unnormalized.size() != grid_.size())
    throw DomainError("PosteriorGrid: density/grid size mismatch");

  double shift = -kInf;
  for (double lv : log_unnormalized) shift = std::max(shift, lv);
  for (const auto& [loc, lm] : log_atoms) shift = std::max(shift, lm);
  if (!std::isfinite(shift))
    throw NumericError("PosteriorGrid: posterior vanished everywhere");

  density_.resize(log_unnormalized.size());
  for (std::size_t i = 0; i < density_.size(); ++i) {
    const double lv = log_unnormalized[i];
    density_[i] = std::isfinite(lv) ? std::exp(lv - shift) : 0.0;
    if (!std::isfinite(density_[i]))
      throw NumericError("PosteriorGrid: non-finite density value");
  }
  double z = integrate_values(density_, grid_);
  double atom_total = 0.0;
  for (const auto& [loc, lm] : log_atoms) {
    const double m = std::isfinite(lm) ? std::exp(lm - shift) : 0.0;
    atoms_.push_back({loc, m});
    atom_total += m;
  }
  const double total = z + atom_total;
  if (!(total > 0.0) || !std::isfinite(total))
    throw NumericError("PosteriorGrid: normalization is not positive/finite");

  for (double& d : density_) d /= total;
  for (auto& a : atoms_) a.mass /= total;
  std::sort(atoms_.begin(), atoms_.end(),
            [](const Atom& a, const Atom& b) { return a.location < b.location; });

  const double log_norm = std::log(total) + shift;
  normalization_ = std::fabs(log_norm) < 700.0 ? std::exp(log_norm)
                                               : (log_norm > 0 ? kInf : 0.0);

  const auto nodes = grid_.nodes();
  cum_.resize(nodes.size());
  cum_[0] = 0.0;
  for (std::size_t i = 1; i < nodes.size(); ++i)
    cum_[i] = cum_[i - 1] + 0.5 * (nodes[i] - nodes[i - 1]) *
                                (density_[i] + density_[i - 1]);
  continuous_mass_ = cum_.back();
}

double PosteriorGrid::density_at(double theta) const {
  const auto nodes = grid_.nodes();
  if (theta <= nodes.front() || theta >= nodes.back()) {
    if (theta == nodes.front()) return density_.front();
    if (theta == nodes.back()) return density_.back();
    return 0.0;
  }
  const auto it = std::upper_bound(nodes.begin(), nodes.end(), theta);
  const std::size_t i = static_cast<std::size_t>(it - nodes.begin());
  const double t = (theta - nodes[i - 1]) / (nodes[i] - nodes[i - 1]);
  return density_[i - 1] + t * (density_[i] - density_[i - 1]);
}

double PosteriorGrid::cdf(double theta) const {
  const auto nodes = grid_.nodes();
  double c;
  if (theta <= nodes.front()) {
    c = 0.0;
  } else if (theta >= nodes.back()) {
    c = continuous_mass_;
  } else {
    const auto it = std::upper_bound(nodes.begin(), nodes.end(), theta);
    const std::size_t i = static_cast<std::size_t>(it - nodes.begin());
    const double dx = theta - nodes[i - 1];
    const double t = dx / (nodes[i] - nodes[i - 1]);
    const double rho = density_[i - 1] + t * (density_[i] - density_[i - 1]);
    c = cum_[i - 1] + 0.5 * dx * (density_[i - 1] + rho);
  }
  for (const auto& a : atoms_)
    if (a.location <= theta) c += a.mass;
  return std::min(c, 1.0);
}

double PosteriorGrid::quantile(double p) const {
  if (p <= 0.0) return grid_.lo();
  if (p >= 1.0) return grid_.hi();
  double lo = grid_.lo();
  double hi = grid_.hi();
  for (int i = 0; i < 100 && hi - lo > 1e-13 * (1.0 + std::fabs(hi)); ++i) {
    const double mid = 0.5 * (lo + hi);
    if (cdf(mid) < p)
      lo = mid;
    else
      hi = mid;
  }
  // generalized inverse: the smallest value whose cdf reaches p, so that a
  // quantile landing on an atom returns the atom location itself
  return hi;
}

double PosteriorGrid::mass_above(double c) const { return 1.0 - cdf(c); }

double PosteriorGrid::mass_below(double c) const {
  return std::max(0.0, cdf(c) - atom_mass_at(c));
}

double PosteriorGrid::atom_mass_at(double location) const {
  double m = 0.0;
  for (const auto& a : atoms_)
    if (a.location == location) m += a.mass;
  return m;
}

// ---------------------------------------------------------------------------
// sa_posterior
// ---------------------------------------------------------------------------

namespace {

struct LogPosteriorEval {
  Treatment treatment;
  const Prior* prior;
  const Likelihood* lik;
  const SelectionRule* rule;
  double y;
  const MixedContext* mixed;

  double operator()(double theta) const {
    const double lf = log_normal_density(y, theta, lik->sigma());
    switch (treatment) {
      case Treatment::Random:
        return log_or_neg_inf(prior->continuous_density(theta)) + lf;
      case Treatment::Fixed: {
        const double lp = log_or_neg_inf(prior->continuous_density(theta));
        if (!std::isfinite(lp)) return -kInf;
        return lp + lf - selection_log_probability(*rule, *lik, theta);
      }
      case Treatment::Mixed: {
        double w = 0.0;
        for (const auto& part : mixed->discrete)
          w += part.mass * part.conditional.continuous_density(theta) /
               part.prob_s;
        if (mixed->lambda_grid) {
          const std::size_t nl = mixed->lambda_conditionals.size();
          for (std::size_t j = 0; j < nl; ++j) {
            const double lw = mixed->lambda_weight[j];
            if (lw > 0.0)
              w += lw * mixed->lambda_conditionals[j].continuous_density(theta);
          }
        }
        return log_or_neg_inf(w) + lf;
      }
    }
    return -kInf;
  }
};

std::vector<std::pair<double, double>> atom_log_masses(
    const Prior& prior, const Likelihood& lik, const SelectionRule& rule,
    double y, bool fixed_treatment) {
  std::vector<std::pair<double, double>> out;
  for (const auto& a : prior.atoms()) {
    double lm = std::log(a.mass) + log_normal_density(y, a.location, lik.sigma());
    if (fixed_treatment)
      lm -= selection_log_probability(rule, lik, a.location);
    out.emplace_back(a.location, lm);
  }
  return out;
}

} // namespace

PosteriorGrid sa_posterior(const EffectKind& kind, const Prior& prior,
                           const Likelihood& lik, const SelectionRule& rule,
                           double y, const PosteriorOptions& opts) {
  if (!lik.is_normal_location())
    throw UnsupportedError(
        "sa_posterior: scalar posterior requires a NormalLocation likelihood; "
        "use the microarray module for (mean, variance) observations");
  if (!rule.contains(y))
    throw PreconditionError(
        "sa_posterior: observation was not selected by the rule");

  const double sigma = lik.sigma();
  Treatment treatment;
  if (prior.is_flat()) {
    treatment = Treatment::Fixed; // non-informative rule: adjust as "fixed"
  } else {
    switch (kind.tag()) {
      case EffectKind::Tag::Random:
        treatment = Treatment::Random;
        break;
      case EffectKind::Tag::Fixed:
        treatment = Treatment::Fixed;
        break;
      case EffectKind::Tag::Mixed:
        treatment = Treatment::Mixed;
        break;
      default:
        treatment = Treatment::Random;
    }
  }

  // A degenerate conditional (theta == lambda) makes the hyperparameter the
  // parameter itself: the mixed model reduces to the "fixed" treatment under
  // the hyperprior.
  const Prior* effective_prior = &prior;
  if (treatment == Treatment::Mixed) {
    const Prior& hyper = kind.hyperprior();
    const auto hyper_atoms = hyper.atoms();
    const double probe_lambda =
        !hyper_atoms.empty()
            ? hyper_atoms.front().location
            : 0.5 * (hyper.support().lo + hyper.support().hi);
    if (kind.conditional()(probe_lambda).is_point_mass()) {
      treatment = Treatment::Fixed;
      effective_prior = &kind.hyperprior();
    }
  }

  MixedContext mixed_ctx;
  if (treatment == Treatment::Mixed)
    mixed_ctx = build_mixed_context(kind, lik, rule);

  LogPosteriorEval eval{treatment, effective_prior, &lik, &rule, y, &mixed_ctx};
  const Prior& grid_prior = *effective_prior;

  const double pad = opts.pad_scales * sigma;
  const double h0 = 2.0 * pad / static_cast<double>(opts.base_nodes - 1);

  if (!grid_prior.is_flat()) {
    // Proper prior: support hull union the likelihood window, plus fine
    // segments over narrow prior components.
    Interval hull{y, y};
    double hull_pad = 2.0 * sigma;
    if (treatment != Treatment::Mixed && grid_prior.atom_mass() < 1.0) {
      hull = grid_prior.support();
    } else if (treatment == Treatment::Mixed) {
      // hull of the conditionals across the hyper support
      hull = Interval{kInf, -kInf};
      auto absorb = [&hull](const Prior& c) {
        const Interval s = c.support();
        hull.lo = std::min(hull.lo, s.lo);
        hull.hi = std::max(hull.hi, s.hi);
      };
      for (const auto& part : mixed_ctx.discrete) absorb(part.conditional);
      for (const auto& c : mixed_ctx.lambda_conditionals) absorb(c);
      if (!(hull.lo < hull.hi)) hull = Interval{y, y};
    }
    const double lo = std::min(hull.lo - hull_pad, y - pad);
    const double hi = std::max(hull.hi + hull_pad, y + pad);

    std::vector<Grid::Segment> segments;
    const auto n_cover = std::min<std::size_t>(
        400000, static_cast<std::size_t>((hi - lo) / h0) + 2);
    segments.push_back({lo, hi, std::max<std::size_t>(n_cover, opts.base_nodes)});
    if (treatment != Treatment::Mixed)
      collect_prior_segments(grid_prior, h0, segments);
    else
      for (const auto& part : mixed_ctx.discrete)
        collect_prior_segments(part.conditional, h0, segments);
    Grid grid = Grid::composite(segments);

    std::vector<double> log_u(grid.size());
    const auto nodes = grid.nodes();
    for (std::size_t i = 0; i < nodes.size(); ++i) log_u[i] = eval(nodes[i]);

    std::vector<std::pair<double, double>> atoms;
    if (treatment != Treatment::Mixed)
      atoms = atom_log_masses(grid_prior, lik, rule, y,
                              treatment == Treatment::Fixed);
    return PosteriorGrid(std::move(grid), std::move(log_u), std::move(atoms),
                         grid_prior.cusps());
  }

  // Flat prior: widen the support until the edge chunks are negligible, then
  // verify properness by doubling the support.
  double lo = y - pad;
  double hi = y + pad;
  auto eval_grid = [&](double a, double b) {
    const auto n = std::max<std::size_t>(
        opts.base_nodes,
        std::min<std::size_t>(400000,
                              static_cast<std::size_t>((b - a) / h0) + 2));
    Grid g = Grid::uniform(a, b, n);
    std::vector<double> log_u(g.size());
    const auto nodes = g.nodes();
    double shift = -kInf;
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      log_u[i] = eval(nodes[i]);
      shift = std::max(shift, log_u[i]);
    }
    return std::tuple<Grid, std::vector<double>, double>(
        std::move(g), std::move(log_u), shift);
  };

  double shift0 = -kInf;
  {
    auto [g, lu, s] = eval_grid(lo, hi);
    shift0 = s;
  }
  if (!std::isfinite(shift0))
    throw NumericError("sa_posterior: posterior vanished on the base window");

  auto chunk_mass = [&](const Grid& g, const std::vector<double>& lu,
                        double from, double to) {
    double m = 0.0;
    const auto nodes = g.nodes();
    const auto w = g.weights();
    for (std::size_t i = 0; i < nodes.size(); ++i)
      if (nodes[i] >= from && nodes[i] <= to && std::isfinite(lu[i]))
        m += w[i] * std::exp(lu[i] - shift0);
    return m;
  };

  Grid grid = Grid::uniform(lo, hi, opts.base_nodes);
  std::vector<double> log_u;
  for (int pass = 0;; ++pass) {
    auto [g, lu, s] = eval_grid(lo, hi);
    grid = std::move(g);
    log_u = std::move(lu);
    double z = 0.0;
    {
      const auto w = grid.weights();
      for (std::size_t i = 0; i < log_u.size(); ++i)
        if (std::isfinite(log_u[i])) z += w[i] * std::exp(log_u[i] - shift0);
    }
    if (!(z > 0.0))
      throw NumericError("sa_posterior: posterior mass vanished");
    const double chunk = 4.0 * sigma;
    const double left = chunk_mass(grid, log_u, lo, lo + chunk) / z;
    const double right = chunk_mass(grid, log_u, hi - chunk, hi) / z;
    const bool widen_left = left > opts.tail_rel_tol;
    const bool widen_right = right > opts.tail_rel_tol;
    if ((!widen_left && !widen_right) || pass >= opts.max_widenings) {
      if (pass >= opts.max_widenings && (widen_left || widen_right)) {
        std::ostringstream msg;
        msg << "sa_posterior: improper posterior, "
            << (widen_left ? "lower" : "upper")
            << " tail keeps accumulating mass after " << pass << " widenings";
        throw ImproperPosteriorError(msg.str());
      }
      // properness check on a doubled support
      const double width = hi - lo;
      auto [g2, lu2, s2] = eval_grid(lo - 0.5 * width, hi + 0.5 * width);
      double z2 = 0.0;
      const auto w2 = g2.weights();
      for (std::size_t i = 0; i < lu2.size(); ++i)
        if (std::isfinite(lu2[i])) z2 += w2[i] * std::exp(lu2[i] - shift0);
      if (std::fabs(z2 - z) > opts.improper_rel_tol * z) {
        const double zl =
            chunk_mass(g2, lu2, lo - 0.5 * width, lo) / std::max(z, 1e-300);
        std::ostringstream msg;
        msg << "sa_posterior: improper posterior, normalization grew by "
            << (z2 - z) / z << " on a doubled support ("
            << (zl > 0.5 * (z2 - z) / z ? "lower" : "upper") << " tail)";
        throw ImproperPosteriorError(msg.str());
      }
      break;
    }
    if (widen_left) lo -= 8.0 * sigma;
    if (widen_right) hi += 8.0 * sigma;
  }

  return PosteriorGrid(std::move(grid), std::move(log_u), {},
                       grid_prior.cusps());
}

// ---------------------------------------------------------------------------
// summarize / posterior_expected_loss
// ---------------------------------------------------------------------------

namespace {

double refine_peak(const Grid& grid, std::span<const double> rho,
                   std::size_t i) {
  const auto x = grid.nodes();
  if (i == 0 || i + 1 >= x.size()) return x[i];
  const double x0 = x[i - 1], x1 = x[i], x2 = x[i + 1];
  const double y0 = rho[i - 1], y1 = rho[i], y2 = rho[i + 1];
  const double num =
      (x1 - x0) * (x1 - x0) * (y1 - y2) - (x1 - x2) * (x1 - x2) * (y1 - y0);
  const double den = (x1 - x0) * (y1 - y2) - (x1 - x2) * (y1 - y0);
  if (den == 0.0) return x1;
  const double xstar = x1 - 0.5 * num / den;
  return std::clamp(xstar, x0, x2);
}

} // namespace

Summary summarize(const PosteriorGrid& post, double level) {
  if (!(level > 0.0 && level < 1.0))
    throw DomainError("summarize: level must lie in (0,1)");

  const Grid& grid = post.grid();
  const auto nodes = grid.nodes();
  const auto w = grid.weights();
  const auto rho = post.density();

  double mean = 0.0;
  for (std::size_t i = 0; i < nodes.size(); ++i) mean += w[i] * nodes[i] * rho[i];
  for (const auto& a : post.atoms()) mean += a.location * a.mass;

  // Mode: best local maximum away from prior cusps; spikes at density kinks
  // are reported through the density itself, not as the mode.
  const auto cusps = post.cusp_points();
  auto near_cusp = [&](std::size_t i) {
    const double local_h =
        (i + 1 < nodes.size() ? nodes[i + 1] - nodes[i]
                              : nodes[i] - nodes[i - 1]);
    for (double c : cusps)
      if (std::fabs(nodes[i] - c) <= 2.0 * local_h) return true;
    return false;
  };

  std::size_t global_idx = 0;
  double best_smooth = -1.0;
  std::size_t best_smooth_idx = nodes.size();
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    if (rho[i] > rho[global_idx]) global_idx = i;
    const bool is_local_max =
        (i == 0 || rho[i] >= rho[i - 1]) &&
        (i + 1 == nodes.size() || rho[i] >= rho[i + 1]);
    if (is_local_max && !near_cusp(i) && rho[i] > best_smooth) {
      best_smooth = rho[i];
      best_smooth_idx = i;
    }
  }
  double mode;
  if (best_smooth_idx < nodes.size())
    mode = refine_peak(grid, rho, best_smooth_idx);
  else
    mode = refine_peak(grid, rho, global_idx);

  const double alpha = 1.0 - level;
  const double ci_lo = post.quantile(0.5 * alpha);
  const double ci_hi = post.quantile(1.0 - 0.5 * alpha);

  return Summary{mean,  mode,
                 ci_lo, ci_hi,
                 level, post.mass_above(0.0),
                 post.mass_below(0.0)};
}

double posterior_expected_loss(const PosteriorGrid& post, const Loss& loss,
                               double y) {
  switch (loss.kind()) {
    case Loss::Kind::Zero:
      return 0.0;
    case Loss::Kind::Directional:
      return y >= 0.0 ? post.mass_below(0.0) : post.mass_above(0.0);
    case Loss::Kind::Membership: {
      double inside = 0.0;
      for (const auto& iv : loss.region())
        inside += post.cdf(iv.hi) - post.cdf(iv.lo);
      return std::clamp(1.0 - inside, 0.0, 1.0);
    }
    case Loss::Kind::TwoGroupNull:
      return post.atom_mass_at(0.0);
  }
  throw ConfigError("posterior_expected_loss: unknown loss");
}

// ---------------------------------------------------------------------------
// freq_selective_ci
// ---------------------------------------------------------------------------

namespace {

// CDF of the truncated likelihood f_S(.|theta0) evaluated at y.
double truncated_cdf_at(const SelectionRule& rule, double sigma, double y,
                        double theta0) {
  double denom = 0.0;
  double below = 0.0;
  for (const auto& iv : rule.region()) {
    denom += normal_interval_mass(iv.lo, iv.hi, theta0, sigma);
    if (iv.lo < y)
      below += normal_interval_mass(iv.lo, std::min(iv.hi, y), theta0, sigma);
  }
  if (!(denom > 0.0)) return std::numeric_limits<double>::quiet_NaN();
  return below / denom;
}

} // namespace

FreqCi freq_selective_ci(const Likelihood& lik, const SelectionRule& rule,
                         double y, double alpha) {
  if (!lik.is_normal_location())
    throw UnsupportedError("freq_selective_ci: requires NormalLocation");
  if (!(alpha > 0.0 && alpha < 1.0))
    throw DomainError("freq_selective_ci: alpha must lie in (0,1)");
  if (!rule.contains(y))
    throw PreconditionError("freq_selective_ci: observation not selected");

  const double sigma = lik.sigma();
  const double lo_scan = y - 20.0 * sigma;
  const double hi_scan = y + 20.0 * sigma;
  const std::size_t n_scan = 2001;
  const double step = (hi_scan - lo_scan) / static_cast<double>(n_scan - 1);

  const double lo_target = 0.5 * alpha;
  const double hi_target = 1.0 - 0.5 * alpha;
  auto accepted = [&](double theta0) {
    const double f = truncated_cdf_at(rule, sigma, y, theta0);
    return std::isfinite(f) && f >= lo_target && f <= hi_target;
  };

  std::vector<Interval> runs;
  bool in_run = false;
  double run_start = 0.0;
  double prev = lo_scan;
  for (std::size_t i = 0; i < n_scan; ++i) {
    const double t = lo_scan + step * static_cast<double>(i);
    const bool acc = accepted(t);
    if (acc && !in_run) {
      in_run = true;
      run_start = t;
    } else if (!acc && in_run) {
      in_run = false;
      runs.push_back({run_start, prev});
    }
    prev = t;
  }
  if (in_run) runs.push_back({run_start, hi_scan});

  // refine each run boundary against the crossing target
  auto refine = [&](double rejected_side, double accepted_side) {
    const double f_rej = truncated_cdf_at(rule, sigma, y, rejected_side);
    const double target =
        (std::isfinite(f_rej) && f_rej > hi_target) ? hi_target : lo_target;
    auto g = [&](double t) {
      const double f = truncated_cdf_at(rule, sigma, y, t);
      if (!std::isfinite(f)) return f_rej > 0.5 ? 1.0 : -1.0;
      return f - target;
    };
    try {
      return find_root(g, std::min(rejected_side, accepted_side),
                       std::max(rejected_side, accepted_side), 1e-3);
    } catch (const BracketingError&) {
      return accepted_side;
    }
  };

  for (auto& run : runs) {
    if (run.lo > lo_scan) run.lo = refine(run.lo - step, run.lo);
    if (run.hi < hi_scan) run.hi = refine(run.hi + step, run.hi);
  }

  const bool warn = runs.size() != 1;
  return FreqCi{std::move(runs), warn};
}

// ---------------------------------------------------------------------------
// compound_selection_posterior
// ---------------------------------------------------------------------------

Summary compound_selection_posterior(double gamma2, std::pair<double, double> y,
                                     double sampling_var, const EffectKind& kind,
                                     std::size_t nodes) {
  if (!(sampling_var > 0.0))
    throw DomainError("compound_selection_posterior: sampling_var must be > 0");
  if (!(gamma2 > 0.0 && gamma2 <= 1.0))
    throw DomainError("compound_selection_posterior: gamma2 must lie in (0,1]");
  if (!(y.second >= y.first))
    throw PreconditionError(
        "compound_selection_posterior: y2 >= y1 required (compound 2 selected)");

  // Marginal prior of (mu1, mu2): unit variances, covariance 1 - gamma2.
  const double rho = 1.0 - gamma2;
  if (rho > 0.999)
    throw DomainError("compound_selection_posterior: degenerate compound prior");

  // "Mixed" reduces to "random": Pr(Y2 >= Y1 | lambda) = 1/2 for every lambda
  // since the compounds are exchangeable given the class effect.
  const bool divide =
      kind.tag() == EffectKind::Tag::Fixed;

  const double span = 8.0;
  const Grid g = Grid::uniform(-span, span, nodes);
  const auto xs = g.nodes();
  const auto ws = g.weights();
  const double sd = std::sqrt(sampling_var);
  const double diff_sd = std::sqrt(2.0 * sampling_var);
  const double det = 1.0 - rho * rho;

  std::vector<double> marginal(nodes, 0.0);
  for (std::size_t j = 0; j < nodes; ++j) {
    const double mu2 = xs[j];
    double acc = 0.0;
    for (std::size_t i = 0; i < nodes; ++i) {
      const double mu1 = xs[i];
      const double quad = (mu1 * mu1 - 2.0 * rho * mu1 * mu2 + mu2 * mu2) / det;
      double u = std::exp(-0.5 * quad) *
                 normal_pdf((y.first - mu1) / sd) *
                 normal_pdf((y.second - mu2) / sd);
      if (divide) u /= normal_cdf((mu2 - mu1) / diff_sd);
      acc += ws[i] * u;
    }
    marginal[j] = acc;
  }

  std::vector<double> log_u(nodes);
  for (std::size_t j = 0; j < nodes; ++j) log_u[j] = log_or_neg_inf(marginal[j]);
  PosteriorGrid post(g, std::move(log_u), {}, {});
  return summarize(post, 0.95);
}

} // namespace sabayes
