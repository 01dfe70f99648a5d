#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "sabayes/model.hpp"
#include "sabayes/numerics.hpp"

namespace sabayes {

/// Loss functions supported by posterior expected loss and risk evaluation.
class Loss {
public:
  enum class Kind { Directional, Membership, TwoGroupNull, Zero };

  static Loss directional();
  static Loss membership(std::vector<Interval> region);
  static Loss two_group_null();
  static Loss zero();
  /// Parse "directional" | "two_group_null" | "zero"; throws ConfigError.
  static Loss from_name(const std::string& name);

  Kind kind() const { return kind_; }
  const std::vector<Interval>& region() const { return region_; }
  std::string name() const;

private:
  Kind kind_ = Kind::Directional;
  std::vector<Interval> region_;
};

/// Normalized density on a 1-D grid plus exact point-mass atoms.
class PosteriorGrid {
public:
  /// Takes unnormalized log-density values on the grid nodes and unnormalized
  /// atom masses on the same (shifted) scale; normalizes jointly.
  PosteriorGrid(Grid grid, std::vector<double> log_unnormalized,
                std::vector<std::pair<double, double>> log_atoms,
                std::vector<double> cusp_points);

  const Grid& grid() const { return grid_; }
  std::span<const double> density() const { return density_; }
  std::span<const Atom> atoms() const { return atoms_; }
  std::span<const double> cusp_points() const { return cusps_; }

  /// Pre-normalization integral (diagnostic).
  double normalization() const { return normalization_; }

  double density_at(double theta) const; // linear interpolation, 0 outside
  double cdf(double theta) const;        // atoms at t <= theta included
  double quantile(double p) const;
  double mass_above(double c) const; // strict: atoms at c excluded
  double mass_below(double c) const;
  double atom_mass_at(double location) const;
  double continuous_mass() const { return continuous_mass_; }

private:
  Grid grid_;
  std::vector<double> density_;
  std::vector<double> cum_; // cumulative continuous mass up to node i
  std::vector<Atom> atoms_;
  std::vector<double> cusps_;
  double normalization_ = 0.0;
  double continuous_mass_ = 0.0;
};

struct Summary {
  double mean;
  double mode;
  double ci_lo;
  double ci_hi;
  double level;
  double tail_prob_pos;
  double tail_prob_neg;
};

struct PosteriorOptions {
  std::size_t base_nodes = 4001; // nodes across the base +/-pad window
  double pad_scales = 12.0;      // base window half-width in likelihood scales
  int max_widenings = 16;        // flat-prior support extensions per side
  double tail_rel_tol = 1e-10;   // edge-chunk mass that stops widening
  double improper_rel_tol = 1e-3; // Z change on doubled support => improper
};

/// Selection-adjusted posterior of theta given y for the three effect kinds.
/// A flat prior is treated as "fixed" (the non-informative rule).
PosteriorGrid sa_posterior(const EffectKind& kind, const Prior& prior,
                           const Likelihood& lik, const SelectionRule& rule,
                           double y, const PosteriorOptions& opts = {});

Summary summarize(const PosteriorGrid& post, double level);

double posterior_expected_loss(const PosteriorGrid& post, const Loss& loss,
                               double y);

struct FreqCi {
  std::vector<Interval> intervals;
  bool warning; // empty or disconnected acceptance set
};

/// Frequentist selective CI: theta0 values whose truncated-likelihood test
/// keeps y between the alpha/2 and 1-alpha/2 quantiles of f_S(.|theta0).
FreqCi freq_selective_ci(const Likelihood& lik, const SelectionRule& rule,
                         double y, double alpha);

/// Two-compound posterior of mu2 under selection {y2 >= y1} (largest-mean
/// reporting). gamma2 splits the unit prior variance between the class effect
/// (1-gamma2, "fixed") and the compound effect (gamma2, "random").
Summary compound_selection_posterior(double gamma2, std::pair<double, double> y,
                                     double sampling_var, const EffectKind& kind,
                                     std::size_t nodes = 801);

} // namespace sabayes
