#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "sabayes/numerics.hpp"

namespace sabayes {

struct Interval {
  double lo;
  double hi;
};

struct Atom {
  double location;
  double mass;
};

struct PriorNode;

/// Immutable density specification for a scalar parameter. A prior may carry
/// point-mass atoms (two-group null, degenerate conditionals) next to its
/// continuous part; the two are reported separately so downstream quadrature
/// can handle atoms exactly.
class Prior {
public:
  static Prior normal(double mean, double var);
  static Prior laplace(double rate);
  static Prior scaled_inv_chisq(double nu0, double s0sq);
  static Prior flat();
  static Prior mixture(std::vector<std::pair<double, Prior>> components);
  static Prior two_group(double pi0, Prior alt);
  static Prior point_mass(double location);

  /// Full density including nothing for atoms (atoms have no density value);
  /// Flat returns 1 everywhere.
  double density(double theta) const;

  /// Continuous part only; equals density() for atom-free priors.
  double continuous_density(double theta) const;

  double cdf(double theta) const;

  std::vector<Atom> atoms() const;
  double atom_mass() const;

  /// Locations where the continuous density is non-differentiable (Laplace
  /// centers). Used by posterior summaries to separate spikes from modes.
  std::vector<double> cusps() const;

  bool proper() const;
  bool is_flat() const;
  bool is_point_mass() const;

  /// Hull outside of which the continuous density carries < ~1e-16 mass, and
  /// the narrowest component scale (grid resolution hint). Throws for Flat.
  Interval support() const;
  double min_scale() const;

  double draw(RngStream& rng) const;

  const PriorNode& node() const { return *node_; }

private:
  explicit Prior(std::shared_ptr<const PriorNode> node);

  std::shared_ptr<const PriorNode> node_;
};

struct NormalPrior {
  double mean;
  double var;
};
struct LaplacePrior {
  double rate;
};
struct ScaledInvChiSqPrior {
  double nu0;
  double s0sq;
};
struct FlatPrior {};
struct MixturePrior {
  std::vector<std::pair<double, Prior>> components;
};
struct TwoGroupPrior {
  double pi0;
  Prior alt;
};
struct PointMassPrior {
  double location;
};

struct PriorNode {
  std::variant<NormalPrior, LaplacePrior, ScaledInvChiSqPrior, FlatPrior,
               MixturePrior, TwoGroupPrior, PointMassPrior>
      v;
};

// ---------------------------------------------------------------------------

struct NormalLocationLik {
  double sigma;
};

/// Mean-plus-sample-variance model: given (mu, sigma^2) the sample mean is
/// N(mu, sigma^2/n) independent of the sample variance sigma^2*ChiSq(df)/df.
struct MeanAndVarianceLik {
  int n;
  int df;
};

class Likelihood {
public:
  static Likelihood normal_location(double sigma);
  static Likelihood mean_and_variance(int n, int df);

  bool is_normal_location() const;
  bool is_mean_and_variance() const;
  double sigma() const; // NormalLocation only
  const MeanAndVarianceLik& mean_and_variance_spec() const;

  /// Scalar observation density f(y|theta); NormalLocation only.
  double density(double y, double theta) const;
  double cdf(double y, double theta) const;

private:
  std::variant<NormalLocationLik, MeanAndVarianceLik> v_;
};

// ---------------------------------------------------------------------------

/// A lambda-indexed family of conditional priors pi_1(theta | lambda).
using ConditionalPrior = std::function<Prior(double lambda)>;

/// Whether the parameter is generated before selection ("fixed"), jointly
/// with it ("random"), or hierarchically with a fixed hyperparameter and a
/// random conditional draw ("mixed").
class EffectKind {
public:
  enum class Tag { Random, Fixed, Mixed };

  static EffectKind random_effect();
  static EffectKind fixed_effect();
  static EffectKind mixed(Prior hyperprior, ConditionalPrior conditional,
                          std::string description = {});

  Tag tag() const { return tag_; }
  const Prior& hyperprior() const;
  const ConditionalPrior& conditional() const;
  const std::string& description() const { return description_; }

private:
  EffectKind(Tag tag, std::optional<Prior> hyper, ConditionalPrior cond,
             std::string description);

  Tag tag_;
  std::optional<Prior> hyperprior_;
  ConditionalPrior conditional_;
  std::string description_;
};

// ---------------------------------------------------------------------------

/// Measurable region of observation space. Scalar rules carry their region as
/// a union of intervals in y; statistic/loss threshold rules acquire a scalar
/// region once resolved against a model (see risk::resolve_rule) or are
/// evaluated by the microarray machinery.
class SelectionRule {
public:
  enum class Kind { TwoSided, OneSided, StatThreshold, LossThreshold };
  enum class Direction { LessEq, GreaterEq, AbsGreater };

  static SelectionRule two_sided(double a);
  static SelectionRule one_sided(double a);
  static SelectionRule whole_space(); // two_sided(0)
  static SelectionRule stat_threshold(std::string stat, double cutoff,
                                      Direction direction);
  static SelectionRule loss_threshold(std::string loss, double cutoff);

  Kind kind() const { return kind_; }
  double cutoff() const { return cutoff_; }
  Direction direction() const { return direction_; }
  const std::string& name() const { return name_; } // stat or loss name

  bool has_scalar_region() const { return !region_.empty(); }
  std::span<const Interval> region() const;
  bool contains(double y) const;

  /// Copy of this rule with an attached scalar region in y.
  SelectionRule with_region(std::vector<Interval> region) const;

  std::string to_string() const;

private:
  Kind kind_;
  double cutoff_ = 0.0;
  Direction direction_ = Direction::AbsGreater;
  std::string name_;
  std::vector<Interval> region_;
};

// ---------------------------------------------------------------------------

double prior_density(const Prior& prior, double theta);

/// Quadrature segments covering every continuous component of the prior at a
/// resolution fine enough for that component, skipping components already
/// resolved by a grid of spacing `coarse_h`.
void collect_prior_segments(const Prior& prior, double coarse_h,
                            std::vector<Grid::Segment>& out);

/// Composite quadrature grid resolving both the prior's structure and a
/// likelihood smoothing scale over the prior hull (proper priors only).
Grid prior_quadrature_grid(const Prior& prior, double smoothing_scale);

/// Pr(y in S | theta). Closed form for scalar-region rules under
/// NormalLocation; throws UnsupportedError for rules without a scalar region.
double selection_probability(const SelectionRule& rule, const Likelihood& lik,
                             double theta);

/// Pr(S | lambda) = integral of Pr(S|theta) pi_1(theta|lambda) dtheta.
double selection_probability_given_hyper(const SelectionRule& rule,
                                         const Likelihood& lik,
                                         const ConditionalPrior& conditional,
                                         double lambda);

} // namespace sabayes
