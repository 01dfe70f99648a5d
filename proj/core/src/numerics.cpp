#include "sabayes/numerics.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <sstream>
#include <thread>

#include "sabayes/errors.hpp"

namespace sabayes {

namespace {

constexpr double kSqrt2 = 1.4142135623730950488;

} // namespace

// ---------------------------------------------------------------------------
// Special functions
// ---------------------------------------------------------------------------

double normal_pdf(double x) {
  static const double inv_sqrt_2pi = 0.3989422804014326779;
  return inv_sqrt_2pi * std::exp(-0.5 * x * x);
}

double normal_cdf(double x) {
  if (std::isnan(x)) throw DomainError("normal_cdf: non-finite argument");
  return 0.5 * std::erfc(-x / kSqrt2);
}

double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0))
    throw DomainError("normal_quantile: p must lie in (0,1)");

  // Acklam's rational approximation, then one Halley step.
  static const double a[6] = {-3.969683028665376e+01, 2.209460984245205e+02,
                              -2.759285104469687e+02, 1.383577518672690e+02,
                              -3.066479806614716e+01, 2.506628277459239e+00};
  static const double b[5] = {-5.447609879822406e+01, 1.615858368580409e+02,
                              -1.556989798598866e+02, 6.680131188771972e+01,
                              -1.328068155288572e+01};
  static const double c[6] = {-7.784894002430293e-03, -3.223964580411365e-01,
                              -2.400758277161838e+00, -2.549732539343734e+00,
                              4.374664141464968e+00,  2.938163982698783e+00};
  static const double d[4] = {7.784695709041462e-03, 3.224671290700398e-01,
                              2.445134137142996e+00, 3.754408661907416e+00};
  const double p_low = 0.02425;

  double q, x;
  if (p < p_low) {
    q = std::sqrt(-2.0 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else if (p <= 1.0 - p_low) {
    q = p - 0.5;
    const double r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) *
        q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  } else {
    q = std::sqrt(-2.0 * std::log1p(-p));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }

  const double e = normal_cdf(x) - p;
  const double u = e / normal_pdf(x);
  x -= u / (1.0 + 0.5 * x * u); // Halley refinement
  return x;
}

double normal_logcdf(double x) {
  if (std::isnan(x)) throw DomainError("normal_logcdf: non-finite argument");
  if (x > -20.0) {
    const double p = normal_cdf(x);
    if (p > 0.0) return std::log(p);
  }
  // Mills-ratio asymptotic: Phi(x) ~ phi(x)/(-x) * (1 - 1/x^2 + 3/x^4 - 15/x^6)
  const double x2 = x * x;
  const double series = 1.0 - 1.0 / x2 + 3.0 / (x2 * x2) - 15.0 / (x2 * x2 * x2);
  return -0.5 * x2 - 0.9189385332046727 - std::log(-x) + std::log(series);
}

double normal_interval_mass(double lo, double hi, double mean, double sigma) {
  if (!(sigma > 0.0)) throw DomainError("normal_interval_mass: sigma must be > 0");
  if (!(lo <= hi)) return 0.0;
  const double zlo = std::isinf(lo) ? -std::numeric_limits<double>::infinity()
                                    : (lo - mean) / sigma;
  const double zhi = std::isinf(hi) ? std::numeric_limits<double>::infinity()
                                    : (hi - mean) / sigma;
  if (std::isinf(zlo) && std::isinf(zhi)) return 1.0;
  if (std::isinf(zlo)) return normal_cdf(zhi);
  if (std::isinf(zhi)) return normal_cdf(-zlo);
  if (zlo > 0.0) return normal_cdf(-zlo) - normal_cdf(-zhi); // right tail
  return normal_cdf(zhi) - normal_cdf(zlo);
}

namespace {

double beta_cont_fraction(double a, double b, double x) {
  const int max_iter = 400;
  const double eps = 3.0e-16;
  const double fpmin = 1.0e-300;

  const double qab = a + b;
  const double qap = a + 1.0;
  const double qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::fabs(d) < fpmin) d = fpmin;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= max_iter; ++m) {
    const int m2 = 2 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < fpmin) d = fpmin;
    c = 1.0 + aa / c;
    if (std::fabs(c) < fpmin) c = fpmin;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < fpmin) d = fpmin;
    c = 1.0 + aa / c;
    if (std::fabs(c) < fpmin) c = fpmin;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < eps) return h;
  }
  throw NumericError("reg_inc_beta: continued fraction did not converge");
}

} // namespace

double reg_inc_beta(double a, double b, double x) {
  if (!(a > 0.0 && b > 0.0)) throw DomainError("reg_inc_beta: a,b must be > 0");
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const double ln_bt = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                       a * std::log(x) + b * std::log1p(-x);
  const double bt = std::exp(ln_bt);
  if (x < (a + 1.0) / (a + b + 2.0))
    return bt * beta_cont_fraction(a, b, x) / a;
  return 1.0 - bt * beta_cont_fraction(b, a, 1.0 - x) / b;
}

double reg_lower_gamma(double a, double x) {
  if (!(a > 0.0)) throw DomainError("reg_lower_gamma: a must be > 0");
  if (x <= 0.0) return 0.0;
  if (x < a + 1.0) {
    // series expansion
    double ap = a;
    double sum = 1.0 / a;
    double del = sum;
    for (int n = 0; n < 500; ++n) {
      ap += 1.0;
      del *= x / ap;
      sum += del;
      if (std::fabs(del) < std::fabs(sum) * 1e-16)
        return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
    }
    throw NumericError("reg_lower_gamma: series did not converge");
  }
  // continued fraction for Q(a,x)
  const double fpmin = 1.0e-300;
  double b = x + 1.0 - a;
  double c = 1.0 / fpmin;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i <= 500; ++i) {
    const double an = -i * (i - a);
    b += 2.0;
    d = an * d + b;
    if (std::fabs(d) < fpmin) d = fpmin;
    c = b + an / c;
    if (std::fabs(c) < fpmin) c = fpmin;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < 1e-16) break;
  }
  const double q = std::exp(-x + a * std::log(x) - std::lgamma(a)) * h;
  return 1.0 - q;
}

double t_cdf(double x, double nu) {
  if (!(nu > 0.0)) throw DomainError("t_cdf: degrees of freedom must be > 0");
  if (std::isnan(x)) throw DomainError("t_cdf: non-finite argument");
  if (x == 0.0) return 0.5;
  const double xb = nu / (nu + x * x);
  const double tail = 0.5 * reg_inc_beta(0.5 * nu, 0.5, xb);
  return x > 0.0 ? 1.0 - tail : tail;
}

double t_quantile(double p, double nu) {
  if (!(p > 0.0 && p < 1.0))
    throw DomainError("t_quantile: p must lie in (0,1)");
  if (!(nu > 0.0)) throw DomainError("t_quantile: degrees of freedom must be > 0");
  if (p == 0.5) return 0.0;
  if (p < 0.5) return -t_quantile(1.0 - p, nu);
  // bracket the upper-tail quantile, then bisect
  double hi = 2.0;
  while (t_cdf(hi, nu) < p && hi < 1e12) hi *= 2.0;
  double lo = 0.0;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (t_cdf(mid, nu) < p)
      lo = mid;
    else
      hi = mid;
    if (hi - lo < 1e-12 * std::max(1.0, std::fabs(hi))) break;
  }
  return 0.5 * (lo + hi);
}

double chisq_cdf(double x, double nu) {
  if (!(nu > 0.0)) throw DomainError("chisq_cdf: degrees of freedom must be > 0");
  if (x <= 0.0) return 0.0;
  return reg_lower_gamma(0.5 * nu, 0.5 * x);
}

double chisq_quantile(double p, double nu) {
  if (!(p > 0.0 && p < 1.0))
    throw DomainError("chisq_quantile: p must lie in (0,1)");
  double hi = nu + 1.0;
  while (chisq_cdf(hi, nu) < p && hi < 1e12) hi *= 2.0;
  double lo = 0.0;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (chisq_cdf(mid, nu) < p)
      lo = mid;
    else
      hi = mid;
    if (hi - lo < 1e-13 * std::max(1.0, hi)) break;
  }
  return 0.5 * (lo + hi);
}

double digamma(double x) {
  if (!(x > 0.0)) throw DomainError("digamma: x must be > 0");
  double result = 0.0;
  while (x < 6.0) {
    result -= 1.0 / x;
    x += 1.0;
  }
  const double inv = 1.0 / x;
  const double inv2 = inv * inv;
  result += std::log(x) - 0.5 * inv -
            inv2 * (1.0 / 12.0 - inv2 * (1.0 / 120.0 - inv2 * (1.0 / 252.0 -
                    inv2 * (1.0 / 240.0 - inv2 / 132.0 * 1.0))));
  return result;
}

double trigamma(double x) {
  if (!(x > 0.0)) throw DomainError("trigamma: x must be > 0");
  double result = 0.0;
  while (x < 6.0) {
    result += 1.0 / (x * x);
    x += 1.0;
  }
  const double inv = 1.0 / x;
  const double inv2 = inv * inv;
  result += inv * (1.0 + 0.5 * inv +
                   inv2 * (1.0 / 6.0 - inv2 * (1.0 / 30.0 - inv2 * (1.0 / 42.0 -
                           inv2 / 30.0))));
  return result;
}

// ---------------------------------------------------------------------------
// Grid / quadrature
// ---------------------------------------------------------------------------

Grid::Grid(std::vector<double> nodes) : nodes_(std::move(nodes)) {
  if (nodes_.size() < 2) throw DomainError("Grid: need at least 2 nodes");
  weights_.resize(nodes_.size());
  const std::size_t n = nodes_.size();
  weights_[0] = 0.5 * (nodes_[1] - nodes_[0]);
  for (std::size_t i = 1; i + 1 < n; ++i)
    weights_[i] = 0.5 * (nodes_[i + 1] - nodes_[i - 1]);
  weights_[n - 1] = 0.5 * (nodes_[n - 1] - nodes_[n - 2]);
}

Grid Grid::uniform(double lo, double hi, std::size_t n) {
  if (!(lo < hi)) throw DomainError("Grid::uniform: lo must be < hi");
  if (n < 2) throw DomainError("Grid::uniform: need at least 2 nodes");
  std::vector<double> nodes(n);
  const double h = (hi - lo) / static_cast<double>(n - 1);
  for (std::size_t i = 0; i < n; ++i)
    nodes[i] = lo + h * static_cast<double>(i);
  nodes[n - 1] = hi;
  return Grid(std::move(nodes));
}

Grid Grid::composite(std::span<const Segment> segments) {
  if (segments.empty()) throw DomainError("Grid::composite: no segments");
  std::vector<double> nodes;
  for (const auto& s : segments) {
    if (!(s.lo < s.hi) || s.n < 2)
      throw DomainError("Grid::composite: malformed segment");
    const double h = (s.hi - s.lo) / static_cast<double>(s.n - 1);
    for (std::size_t i = 0; i < s.n; ++i)
      nodes.push_back(s.lo + h * static_cast<double>(i));
  }
  std::sort(nodes.begin(), nodes.end());
  // drop near-duplicates relative to local spacing
  std::vector<double> merged;
  merged.reserve(nodes.size());
  for (double x : nodes) {
    if (merged.empty() ||
        x - merged.back() > 1e-12 * (1.0 + std::fabs(x)))
      merged.push_back(x);
  }
  return Grid(std::move(merged));
}

double integrate(const std::function<double(double)>& f, const Grid& grid) {
  double sum = 0.0;
  const auto nodes = grid.nodes();
  const auto weights = grid.weights();
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const double v = f(nodes[i]);
    if (!std::isfinite(v)) {
      std::ostringstream msg;
      msg << "integrate: integrand non-finite at node " << nodes[i];
      throw NumericError(msg.str());
    }
    sum += weights[i] * v;
  }
  return sum;
}

double integrate_values(std::span<const double> values, const Grid& grid) {
  if (values.size() != grid.size())
    throw DomainError("integrate_values: size mismatch");
  double sum = 0.0;
  const auto weights = grid.weights();
  for (std::size_t i = 0; i < values.size(); ++i) sum += weights[i] * values[i];
  return sum;
}

double integrate_refinement_delta(const std::function<double(double)>& f,
                                  double lo, double hi, std::size_t n) {
  const double coarse = integrate(f, Grid::uniform(lo, hi, n));
  const double fine = integrate(f, Grid::uniform(lo, hi, 2 * n - 1));
  const double scale = std::max(std::fabs(fine), 1e-300);
  return std::fabs(fine - coarse) / scale;
}

double find_root(const std::function<double(double)>& g, double lo, double hi,
                 double tol) {
  if (!(lo < hi)) throw DomainError("find_root: lo must be < hi");
  if (!(tol > 0.0)) throw DomainError("find_root: tol must be > 0");
  double flo = g(lo);
  double fhi = g(hi);
  if (flo == 0.0) return lo;
  if (fhi == 0.0) return hi;
  if ((flo > 0.0) == (fhi > 0.0))
    throw BracketingError("find_root: no sign change on bracket");
  while (hi - lo > tol) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break; // bracket at floating resolution
    const double fmid = g(mid);
    if (fmid == 0.0) return mid;
    if ((fmid > 0.0) == (flo > 0.0)) {
      lo = mid;
      flo = fmid;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

// ---------------------------------------------------------------------------
// RngStream
// ---------------------------------------------------------------------------

namespace {

std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

std::uint64_t rotl64(std::uint64_t x, int k) {
  return (x << k) | (x >> (64 - k));
}

} // namespace

RngStream::RngStream(std::uint64_t seed, std::uint64_t stream_id)
    : seed_(seed), stream_id_(stream_id) {
  std::uint64_t sm = seed ^ 0xD1B54A32D192ED03ULL;
  std::uint64_t sm2 = stream_id ^ 0x8CB92BA72F3D8DD7ULL;
  for (int i = 0; i < 4; ++i) state_[i] = splitmix64(sm) ^ splitmix64(sm2);
  if ((state_[0] | state_[1] | state_[2] | state_[3]) == 0) state_[0] = 1;
}

std::uint64_t RngStream::next_u64() {
  const std::uint64_t result = rotl64(state_[0] + state_[3], 23) + state_[0];
  const std::uint64_t t = state_[1] << 17;
  state_[2] ^= state_[0];
  state_[3] ^= state_[1];
  state_[1] ^= state_[2];
  state_[0] ^= state_[3];
  state_[2] ^= t;
  state_[3] = rotl64(state_[3], 45);
  return result;
}

double RngStream::uniform() {
  return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
}

double RngStream::normal() { return normal_quantile(uniform()); }

double RngStream::exponential(double rate) {
  if (!(rate > 0.0)) throw DomainError("RngStream::exponential: rate must be > 0");
  return -std::log(uniform()) / rate;
}

double RngStream::gamma(double shape) {
  if (!(shape > 0.0)) throw DomainError("RngStream::gamma: shape must be > 0");
  if (shape < 1.0) {
    const double u = uniform();
    return gamma(shape + 1.0) * std::pow(u, 1.0 / shape);
  }
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double x, v;
    do {
      x = normal();
      v = 1.0 + c * x;
    } while (v <= 0.0);
    v = v * v * v;
    const double u = uniform();
    if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
    if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
  }
}

double RngStream::chisq(double nu) { return 2.0 * gamma(0.5 * nu); }

std::size_t RngStream::pick(std::span<const double> weights) {
  if (weights.empty()) throw DomainError("RngStream::pick: empty weights");
  double total = 0.0;
  for (double w : weights) total += w;
  double u = uniform() * total;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    u -= weights[i];
    if (u <= 0.0) return i;
  }
  return weights.size() - 1;
}

RngStream RngStream::substream(std::uint64_t k) const {
  std::uint64_t mix = stream_id_ ^ 0x9E3779B97F4A7C15ULL;
  mix = (mix + k) * 0xBF58476D1CE4E5B9ULL;
  mix ^= mix >> 31;
  return RngStream(seed_, mix);
}

// ---------------------------------------------------------------------------
// parallel_for
// ---------------------------------------------------------------------------

void parallel_for(std::size_t n, unsigned workers,
                  const std::function<void(std::size_t)>& fn) {
  if (n == 0) return;
  if (workers <= 1 || n == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  const unsigned nthreads = std::min<std::size_t>(workers, n);
  std::atomic<std::size_t> next{0};
  std::exception_ptr first_error;
  std::atomic<bool> failed{false};
  std::vector<std::thread> pool;
  pool.reserve(nthreads);
  for (unsigned t = 0; t < nthreads; ++t) {
    pool.emplace_back([&] {
      for (;;) {
        const std::size_t i = next.fetch_add(1);
        if (i >= n || failed.load()) return;
        try {
          fn(i);
        } catch (...) {
          if (!failed.exchange(true)) first_error = std::current_exception();
          return;
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (first_error) std::rethrow_exception(first_error);
}

} // namespace sabayes
