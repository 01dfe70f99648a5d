#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

namespace sabayes {

// ---------------------------------------------------------------------------
// Special functions
// ---------------------------------------------------------------------------

double normal_pdf(double x);

/// Standard normal CDF, absolute error below 1e-12 on finite input.
double normal_cdf(double x);

/// Inverse of normal_cdf on (0,1). Throws DomainError outside the open interval.
double normal_quantile(double p);

/// log(normal_cdf(x)), asymptotic in the far left tail where the CDF underflows.
double normal_logcdf(double x);

/// Pr(lo < X <= hi) for X ~ N(mean, sigma^2), stable when the interval sits in
/// a far tail (avoids cancellation of near-one CDF values).
double normal_interval_mass(double lo, double hi, double mean, double sigma);

/// Student-t CDF with nu > 0 degrees of freedom (non-integer nu allowed).
double t_cdf(double x, double nu);

/// Inverse of t_cdf in x for fixed nu.
double t_quantile(double p, double nu);

double chisq_cdf(double x, double nu);
double chisq_quantile(double p, double nu);

/// Regularized incomplete beta I_x(a,b).
double reg_inc_beta(double a, double b, double x);

/// Regularized lower incomplete gamma P(a,x).
double reg_lower_gamma(double a, double x);

double digamma(double x);
double trigamma(double x);

// ---------------------------------------------------------------------------
// Grids and quadrature
// ---------------------------------------------------------------------------

/// A monotone node sequence with trapezoid weights. Supports non-uniform
/// spacing so that narrow prior components can be resolved locally.
class Grid {
public:
  struct Segment {
    double lo;
    double hi;
    std::size_t n; // node count for this segment, >= 2
  };

  static Grid uniform(double lo, double hi, std::size_t n);

  /// Union of uniform segments, merged and deduplicated into one node set.
  static Grid composite(std::span<const Segment> segments);

  double lo() const { return nodes_.front(); }
  double hi() const { return nodes_.back(); }
  std::size_t size() const { return nodes_.size(); }
  std::span<const double> nodes() const { return nodes_; }
  std::span<const double> weights() const { return weights_; }

private:
  explicit Grid(std::vector<double> nodes);

  std::vector<double> nodes_;
  std::vector<double> weights_;
};

/// Trapezoid rule over the grid. Throws NumericError naming the node when the
/// integrand evaluates non-finite.
double integrate(const std::function<double(double)>& f, const Grid& grid);

/// Trapezoid rule for values already evaluated on the grid nodes.
double integrate_values(std::span<const double> values, const Grid& grid);

/// Richardson-style diagnostic: relative change when the node count doubles.
double integrate_refinement_delta(const std::function<double(double)>& f,
                                  double lo, double hi, std::size_t n);

/// Bisection on a bracketing sign change; returns the bracket midpoint once
/// the bracket width is <= tol. Throws BracketingError without a sign change.
double find_root(const std::function<double(double)>& g, double lo, double hi,
                 double tol = 1e-4);

// ---------------------------------------------------------------------------
// Seeded random streams
// ---------------------------------------------------------------------------

/// Deterministic xoshiro256++ stream keyed by (seed, stream_id). Identical key
/// gives an identical draw sequence on every run and any worker count. A
/// stream may be moved between workers but not drawn from concurrently.
class RngStream {
public:
  explicit RngStream(std::uint64_t seed, std::uint64_t stream_id = 0);

  std::uint64_t next_u64();

  /// Uniform draw strictly inside (0,1).
  double uniform();

  /// Standard normal draw via inverse-CDF transform.
  double normal();

  double exponential(double rate);

  /// Gamma(shape, scale 1), Marsaglia-Tsang.
  double gamma(double shape);

  double chisq(double nu);

  /// Categorical index draw proportional to the given nonnegative weights.
  std::size_t pick(std::span<const double> weights);

  /// Derived independent stream; substream(k) != substream(j) for k != j.
  RngStream substream(std::uint64_t k) const;

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream_id() const { return stream_id_; }

private:
  std::uint64_t seed_;
  std::uint64_t stream_id_;
  std::uint64_t state_[4];
};

/// Run fn(0..n-1) on up to `workers` threads. Results must be written to
/// disjoint slots; the partition is deterministic in n only.
void parallel_for(std::size_t n, unsigned workers,
                  const std::function<void(std::size_t)>& fn);

} // namespace sabayes
