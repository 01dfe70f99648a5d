#include "sabayes/model.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <sstream>

#include "sabayes/errors.hpp"

namespace sabayes {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::string format_double(double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

} // namespace

// ---------------------------------------------------------------------------
// Prior
// ---------------------------------------------------------------------------

Prior::Prior(std::shared_ptr<const PriorNode> node) : node_(std::move(node)) {}

Prior Prior::normal(double mean, double var) {
  if (!(var > 0.0)) throw DomainError("Prior::normal: variance must be > 0");
  return Prior(std::make_shared<PriorNode>(PriorNode{NormalPrior{mean, var}}));
}

Prior Prior::laplace(double rate) {
  if (!(rate > 0.0)) throw DomainError("Prior::laplace: rate must be > 0");
  return Prior(std::make_shared<PriorNode>(PriorNode{LaplacePrior{rate}}));
}

Prior Prior::scaled_inv_chisq(double nu0, double s0sq) {
  if (!(nu0 > 0.0) || !(s0sq > 0.0))
    throw DomainError("Prior::scaled_inv_chisq: nu0 and s0sq must be > 0");
  return Prior(
      std::make_shared<PriorNode>(PriorNode{ScaledInvChiSqPrior{nu0, s0sq}}));
}

Prior Prior::flat() {
  return Prior(std::make_shared<PriorNode>(PriorNode{FlatPrior{}}));
}

Prior Prior::mixture(std::vector<std::pair<double, Prior>> components) {
  if (components.empty())
    throw DomainError("Prior::mixture: needs at least one component");
  double total = 0.0;
  for (const auto& [w, p] : components) {
    if (!(w > 0.0)) throw DomainError("Prior::mixture: weights must be > 0");
    if (p.is_flat()) throw DomainError("Prior::mixture: flat component");
    total += w;
  }
  if (std::fabs(total - 1.0) > 1e-12)
    throw DomainError("Prior::mixture: weights must sum to 1");
  return Prior(std::make_shared<PriorNode>(
      PriorNode{MixturePrior{std::move(components)}}));
}

Prior Prior::two_group(double pi0, Prior alt) {
  if (!(pi0 >= 0.0 && pi0 <= 1.0))
    throw DomainError("Prior::two_group: pi0 must lie in [0,1]");
  if (alt.is_flat()) throw DomainError("Prior::two_group: flat alternative");
  return Prior(
      std::make_shared<PriorNode>(PriorNode{TwoGroupPrior{pi0, std::move(alt)}}));
}

Prior Prior::point_mass(double location) {
  return Prior(
      std::make_shared<PriorNode>(PriorNode{PointMassPrior{location}}));
}

double Prior::density(double theta) const { return continuous_density(theta); }

double Prior::continuous_density(double theta) const {
  return std::visit(
      [theta](const auto& p) -> double {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, NormalPrior>) {
          return normal_pdf((theta - p.mean) / std::sqrt(p.var)) /
                 std::sqrt(p.var);
        } else if constexpr (std::is_same_v<T, LaplacePrior>) {
          return 0.5 * p.rate * std::exp(-p.rate * std::fabs(theta));
        } else if constexpr (std::is_same_v<T, ScaledInvChiSqPrior>) {
          if (theta <= 0.0) return 0.0;
          const double half_nu = 0.5 * p.nu0;
          const double log_density =
              half_nu * std::log(half_nu * p.s0sq) - std::lgamma(half_nu) -
              (half_nu + 1.0) * std::log(theta) - half_nu * p.s0sq / theta;
          return std::exp(log_density);
        } else if constexpr (std::is_same_v<T, FlatPrior>) {
          return 1.0;
        } else if constexpr (std::is_same_v<T, MixturePrior>) {
          double sum = 0.0;
          for (const auto& [w, comp] : p.components)
            sum += w * comp.continuous_density(theta);
          return sum;
        } else if constexpr (std::is_same_v<T, TwoGroupPrior>) {
          return (1.0 - p.pi0) * p.alt.continuous_density(theta);
        } else {
          static_assert(std::is_same_v<T, PointMassPrior>);
          return 0.0;
        }
      },
      node_->v);
}

double Prior::cdf(double theta) const {
  return std::visit(
      [theta](const auto& p) -> double {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, NormalPrior>) {
          return normal_cdf((theta - p.mean) / std::sqrt(p.var));
        } else if constexpr (std::is_same_v<T, LaplacePrior>) {
          if (theta < 0.0) return 0.5 * std::exp(p.rate * theta);
          return 1.0 - 0.5 * std::exp(-p.rate * theta);
        } else if constexpr (std::is_same_v<T, ScaledInvChiSqPrior>) {
          if (theta <= 0.0) return 0.0;
          return 1.0 - chisq_cdf(p.nu0 * p.s0sq / theta, p.nu0);
        } else if constexpr (std::is_same_v<T, FlatPrior>) {
          throw DomainError("Prior::cdf: flat prior has no distribution");
        } else if constexpr (std::is_same_v<T, MixturePrior>) {
          double sum = 0.0;
          for (const auto& [w, comp] : p.components) sum += w * comp.cdf(theta);
          return sum;
        } else if constexpr (std::is_same_v<T, TwoGroupPrior>) {
          const double step = theta >= 0.0 ? p.pi0 : 0.0;
          return step + (1.0 - p.pi0) * p.alt.cdf(theta);
        } else {
          static_assert(std::is_same_v<T, PointMassPrior>);
          return theta >= p.location ? 1.0 : 0.0;
        }
      },
      node_->v);
}

std::vector<Atom> Prior::atoms() const {
  return std::visit(
      [](const auto& p) -> std::vector<Atom> {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, MixturePrior>) {
          std::vector<Atom> out;
          for (const auto& [w, comp] : p.components)
            for (const auto& a : comp.atoms())
              out.push_back({a.location, w * a.mass});
          return out;
        } else if constexpr (std::is_same_v<T, TwoGroupPrior>) {
          std::vector<Atom> out{{0.0, p.pi0}};
          for (const auto& a : p.alt.atoms())
            out.push_back({a.location, (1.0 - p.pi0) * a.mass});
          return out;
        } else if constexpr (std::is_same_v<T, PointMassPrior>) {
          return {{p.location, 1.0}};
        } else {
          return {};
        }
      },
      node_->v);
}

double Prior::atom_mass() const {
  double total = 0.0;
  for (const auto& a : atoms()) total += a.mass;
  return total;
}

std::vector<double> Prior::cusps() const {
  return std::visit(
      [](const auto& p) -> std::vector<double> {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, LaplacePrior>) {
          return {0.0};
        } else if constexpr (std::is_same_v<T, MixturePrior>) {
          std::vector<double> out;
          for (const auto& [w, comp] : p.components)
            for (double c : comp.cusps()) out.push_back(c);
          std::sort(out.begin(), out.end());
          out.erase(std::unique(out.begin(), out.end()), out.end());
          return out;
        } else if constexpr (std::is_same_v<T, TwoGroupPrior>) {
          return p.alt.cusps();
        } else {
          return {};
        }
      },
      node_->v);
}

bool Prior::proper() const { return !is_flat(); }

bool Prior::is_flat() const {
  return std::holds_alternative<FlatPrior>(node_->v);
}

bool Prior::is_point_mass() const {
  if (std::holds_alternative<PointMassPrior>(node_->v)) return true;
  if (const auto* mix = std::get_if<MixturePrior>(&node_->v)) {
    return std::all_of(mix->components.begin(), mix->components.end(),
                       [](const auto& c) { return c.second.is_point_mass(); });
  }
  return false;
}

Interval Prior::support() const {
  return std::visit(
      [](const auto& p) -> Interval {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, NormalPrior>) {
          const double s = std::sqrt(p.var);
          return {p.mean - 10.0 * s, p.mean + 10.0 * s};
        } else if constexpr (std::is_same_v<T, LaplacePrior>) {
          return {-45.0 / p.rate, 45.0 / p.rate};
        } else if constexpr (std::is_same_v<T, ScaledInvChiSqPrior>) {
          const double scale = p.nu0 * p.s0sq;
          return {scale / chisq_quantile(1.0 - 1e-12, p.nu0),
                  scale / chisq_quantile(1e-12, p.nu0)};
        } else if constexpr (std::is_same_v<T, FlatPrior>) {
          throw DomainError("Prior::support: flat prior is unbounded");
        } else if constexpr (std::is_same_v<T, MixturePrior>) {
          Interval hull{kInf, -kInf};
          for (const auto& [w, comp] : p.components) {
            const Interval s = comp.support();
            hull.lo = std::min(hull.lo, s.lo);
            hull.hi = std::max(hull.hi, s.hi);
          }
          return hull;
        } else if constexpr (std::is_same_v<T, TwoGroupPrior>) {
          Interval s = p.alt.support();
          s.lo = std::min(s.lo, 0.0);
          s.hi = std::max(s.hi, 0.0);
          return s;
        } else {
          static_assert(std::is_same_v<T, PointMassPrior>);
          return {p.location, p.location};
        }
      },
      node_->v);
}

double Prior::min_scale() const {
  return std::visit(
      [](const auto& p) -> double {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, NormalPrior>) {
          return std::sqrt(p.var);
        } else if constexpr (std::is_same_v<T, LaplacePrior>) {
          return 1.0 / p.rate;
        } else if constexpr (std::is_same_v<T, ScaledInvChiSqPrior>) {
          return 0.5 * p.s0sq;
        } else if constexpr (std::is_same_v<T, FlatPrior>) {
          return kInf;
        } else if constexpr (std::is_same_v<T, MixturePrior>) {
          double s = kInf;
          for (const auto& [w, comp] : p.components)
            s = std::min(s, comp.min_scale());
          return s;
        } else if constexpr (std::is_same_v<T, TwoGroupPrior>) {
          return p.alt.min_scale();
        } else {
          static_assert(std::is_same_v<T, PointMassPrior>);
          return kInf; // atom handled exactly, no grid resolution needed
        }
      },
      node_->v);
}

double Prior::draw(RngStream& rng) const {
  return std::visit(
      [&rng](const auto& p) -> double {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, NormalPrior>) {
          return p.mean + std::sqrt(p.var) * rng.normal();
        } else if constexpr (std::is_same_v<T, LaplacePrior>) {
          const double mag = rng.exponential(p.rate);
          return rng.uniform() < 0.5 ? -mag : mag;
        } else if constexpr (std::is_same_v<T, ScaledInvChiSqPrior>) {
          return p.nu0 * p.s0sq / rng.chisq(p.nu0);
        } else if constexpr (std::is_same_v<T, FlatPrior>) {
          throw DomainError("Prior::draw: flat prior is not a distribution");
        } else if constexpr (std::is_same_v<T, MixturePrior>) {
          std::vector<double> w;
          w.reserve(p.components.size());
          for (const auto& c : p.components) w.push_back(c.first);
          return p.components[rng.pick(w)].second.draw(rng);
        } else if constexpr (std::is_same_v<T, TwoGroupPrior>) {
          return rng.uniform() < p.pi0 ? 0.0 : p.alt.draw(rng);
        } else {
          static_assert(std::is_same_v<T, PointMassPrior>);
          return p.location;
        }
      },
      node_->v);
}

double prior_density(const Prior& prior, double theta) {
  return prior.density(theta);
}

void collect_prior_segments(const Prior& prior, double coarse_h,
                            std::vector<Grid::Segment>& out) {
  std::visit(
      [&](const auto& p) {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, NormalPrior> ||
                      std::is_same_v<T, LaplacePrior> ||
                      std::is_same_v<T, ScaledInvChiSqPrior>) {
          const Interval sup = prior.support();
          const double h = prior.min_scale() / 60.0;
          if (h >= coarse_h) return; // already resolved by the coarse grid
          const auto n = static_cast<std::size_t>((sup.hi - sup.lo) / h) + 2;
          out.push_back({sup.lo, sup.hi, std::min<std::size_t>(n, 200000)});
        } else if constexpr (std::is_same_v<T, MixturePrior>) {
          for (const auto& [w, comp] : p.components)
            collect_prior_segments(comp, coarse_h, out);
        } else if constexpr (std::is_same_v<T, TwoGroupPrior>) {
          collect_prior_segments(p.alt, coarse_h, out);
        }
        // Flat and PointMass contribute no continuous structure.
      },
      prior.node().v);
}

Grid prior_quadrature_grid(const Prior& prior, double smoothing_scale) {
  if (prior.is_flat())
    throw DomainError("prior_quadrature_grid: flat prior has no hull");
  const Interval hull = prior.support();
  const double lo = hull.lo - 2.0 * smoothing_scale;
  const double hi = hull.hi + 2.0 * smoothing_scale;
  const double coarse_h = smoothing_scale / 60.0;
  std::vector<Grid::Segment> segments;
  const auto n_coarse =
      std::min<std::size_t>(200000,
                            static_cast<std::size_t>((hi - lo) / coarse_h) + 2);
  segments.push_back({lo, hi, std::max<std::size_t>(n_coarse, 401)});
  collect_prior_segments(prior, coarse_h, segments);
  return Grid::composite(segments);
}

// ---------------------------------------------------------------------------
// Likelihood
// ---------------------------------------------------------------------------

Likelihood Likelihood::normal_location(double sigma) {
  if (!(sigma > 0.0))
    throw DomainError("Likelihood::normal_location: sigma must be > 0");
  Likelihood lik;
  lik.v_ = NormalLocationLik{sigma};
  return lik;
}

Likelihood Likelihood::mean_and_variance(int n, int df) {
  if (n < 2) throw DomainError("Likelihood::mean_and_variance: n must be >= 2");
  if (df < 1) throw DomainError("Likelihood::mean_and_variance: df must be >= 1");
  Likelihood lik;
  lik.v_ = MeanAndVarianceLik{n, df};
  return lik;
}

bool Likelihood::is_normal_location() const {
  return std::holds_alternative<NormalLocationLik>(v_);
}

bool Likelihood::is_mean_and_variance() const {
  return std::holds_alternative<MeanAndVarianceLik>(v_);
}

double Likelihood::sigma() const {
  if (const auto* nl = std::get_if<NormalLocationLik>(&v_)) return nl->sigma;
  throw UnsupportedError("Likelihood::sigma: not a NormalLocation likelihood");
}

const MeanAndVarianceLik& Likelihood::mean_and_variance_spec() const {
  if (const auto* mv = std::get_if<MeanAndVarianceLik>(&v_)) return *mv;
  throw UnsupportedError(
      "Likelihood::mean_and_variance_spec: not a MeanAndVariance likelihood");
}

double Likelihood::density(double y, double theta) const {
  if (const auto* nl = std::get_if<NormalLocationLik>(&v_))
    return normal_pdf((y - theta) / nl->sigma) / nl->sigma;
  throw UnsupportedError(
      "Likelihood::density: scalar density undefined for MeanAndVariance");
}

double Likelihood::cdf(double y, double theta) const {
  if (const auto* nl = std::get_if<NormalLocationLik>(&v_))
    return normal_cdf((y - theta) / nl->sigma);
  throw UnsupportedError(
      "Likelihood::cdf: scalar cdf undefined for MeanAndVariance");
}

// ---------------------------------------------------------------------------
// EffectKind
// ---------------------------------------------------------------------------

EffectKind::EffectKind(Tag tag, std::optional<Prior> hyper,
                       ConditionalPrior cond, std::string description)
    : tag_(tag),
      hyperprior_(std::move(hyper)),
      conditional_(std::move(cond)),
      description_(std::move(description)) {}

EffectKind EffectKind::random_effect() {
  return EffectKind(Tag::Random, std::nullopt, {}, "random");
}

EffectKind EffectKind::fixed_effect() {
  return EffectKind(Tag::Fixed, std::nullopt, {}, "fixed");
}

EffectKind EffectKind::mixed(Prior hyperprior, ConditionalPrior conditional,
                             std::string description) {
  if (!hyperprior.proper())
    throw PreconditionError("EffectKind::mixed: hyperprior must be proper");
  if (!conditional)
    throw PreconditionError("EffectKind::mixed: conditional prior required");
  if (description.empty()) description = "mixed";
  return EffectKind(Tag::Mixed, std::move(hyperprior), std::move(conditional),
                    std::move(description));
}

const Prior& EffectKind::hyperprior() const {
  if (!hyperprior_)
    throw PreconditionError("EffectKind::hyperprior: not a mixed effect");
  return *hyperprior_;
}

const ConditionalPrior& EffectKind::conditional() const {
  if (!conditional_)
    throw PreconditionError("EffectKind::conditional: not a mixed effect");
  return conditional_;
}

// ---------------------------------------------------------------------------
// SelectionRule
// ---------------------------------------------------------------------------

SelectionRule SelectionRule::two_sided(double a) {
  if (!(a >= 0.0)) throw DomainError("SelectionRule::two_sided: need a >= 0");
  SelectionRule r;
  r.kind_ = Kind::TwoSided;
  r.cutoff_ = a;
  r.direction_ = Direction::AbsGreater;
  if (a == 0.0)
    r.region_ = {{-kInf, kInf}};
  else
    r.region_ = {{-kInf, -a}, {a, kInf}};
  return r;
}

SelectionRule SelectionRule::one_sided(double a) {
  SelectionRule r;
  r.kind_ = Kind::OneSided;
  r.cutoff_ = a;
  r.direction_ = Direction::GreaterEq;
  r.region_ = {{a, kInf}};
  return r;
}

SelectionRule SelectionRule::whole_space() { return two_sided(0.0); }

SelectionRule SelectionRule::stat_threshold(std::string stat, double cutoff,
                                            Direction direction) {
  SelectionRule r;
  r.kind_ = Kind::StatThreshold;
  r.cutoff_ = cutoff;
  r.direction_ = direction;
  r.name_ = std::move(stat);
  return r;
}

SelectionRule SelectionRule::loss_threshold(std::string loss, double cutoff) {
  if (!(cutoff > 0.0))
    throw DomainError("SelectionRule::loss_threshold: cutoff must be > 0");
  SelectionRule r;
  r.kind_ = Kind::LossThreshold;
  r.cutoff_ = cutoff;
  r.direction_ = Direction::LessEq;
  r.name_ = std::move(loss);
  return r;
}

std::span<const Interval> SelectionRule::region() const {
  if (region_.empty())
    throw UnsupportedError(
        "SelectionRule::region: rule '" + to_string() +
        "' has no scalar observation region; resolve it against a model first");
  return region_;
}

bool SelectionRule::contains(double y) const {
  for (const auto& iv : region())
    if (y > iv.lo && y < iv.hi) return true;
  return false;
}

SelectionRule SelectionRule::with_region(std::vector<Interval> region) const {
  SelectionRule r = *this;
  r.region_ = std::move(region);
  return r;
}

std::string SelectionRule::to_string() const {
  switch (kind_) {
    case Kind::TwoSided:
      return "twosided:" + format_double(cutoff_);
    case Kind::OneSided:
      return "onesided:" + format_double(cutoff_);
    case Kind::StatThreshold:
      return "stat:" + name_ + ":" + format_double(cutoff_);
    case Kind::LossThreshold:
      return "losscutoff:" + name_ + ":" + format_double(cutoff_);
  }
  return "unknown";
}

// ---------------------------------------------------------------------------
// Selection probabilities
// ---------------------------------------------------------------------------

double selection_probability(const SelectionRule& rule, const Likelihood& lik,
                             double theta) {
  if (!rule.has_scalar_region())
    throw UnsupportedError(
        "selection_probability: rule '" + rule.to_string() +
        "' is not evaluable under this likelihood without resolution");
  if (!lik.is_normal_location())
    throw UnsupportedError(
        "selection_probability: scalar rules require a NormalLocation "
        "likelihood; use the microarray module for statistic thresholds");
  const double sigma = lik.sigma();
  double p = 0.0;
  for (const auto& iv : rule.region()) {
    const double upper =
        std::isinf(iv.hi) ? 1.0 : normal_cdf((iv.hi - theta) / sigma);
    const double lower =
        std::isinf(iv.lo) ? 0.0 : normal_cdf((iv.lo - theta) / sigma);
    p += upper - lower;
  }
  return std::clamp(p, 0.0, 1.0);
}

double selection_probability_given_hyper(const SelectionRule& rule,
                                         const Likelihood& lik,
                                         const ConditionalPrior& conditional,
                                         double lambda) {
  const Prior cond = conditional(lambda);
  if (!cond.proper())
    throw PreconditionError(
        "selection_probability_given_hyper: conditional prior must be proper");

  double p = 0.0;
  for (const auto& a : cond.atoms())
    p += a.mass * selection_probability(rule, lik, a.location);
  if (cond.is_point_mass()) return p;

  const Interval sup = cond.support();
  const double sigma = lik.sigma();
  const double h = std::min(cond.min_scale(), sigma) / 60.0;
  const std::size_t n = std::min<std::size_t>(
      200000, std::max<std::size_t>(801, static_cast<std::size_t>(
                                             (sup.hi - sup.lo) / h) + 1));
  const Grid grid = Grid::uniform(sup.lo, sup.hi, n);
  const double cont = integrate(
      [&](double theta) {
        return cond.continuous_density(theta) *
               selection_probability(rule, lik, theta);
      },
      grid);
  if (!std::isfinite(cont))
    throw NumericError("selection_probability_given_hyper: divergent integral");
  return std::clamp(p + cont, 0.0, 1.0);
}

} // namespace sabayes
