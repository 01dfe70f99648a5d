#include "sabayes/microarray.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <limits>
#include <mutex>
#include <sstream>

#include "sabayes/errors.hpp"

namespace sabayes {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double chi2_log_density(double x, double k) {
  return (0.5 * k - 1.0) * std::log(x) - 0.5 * x - 0.5 * k * std::log(2.0) -
         std::lgamma(0.5 * k);
}

} // namespace

// ---------------------------------------------------------------------------
// Ingestion
// ---------------------------------------------------------------------------

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      fields.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur += ch;
    }
  }
  fields.push_back(cur);
  for (auto& f : fields) {
    const auto b = f.find_first_not_of(" \t");
    const auto e = f.find_last_not_of(" \t");
    f = b == std::string::npos ? "" : f.substr(b, e - b + 1);
  }
  return fields;
}

bool parses_as_number(const std::string& s) {
  if (s.empty()) return false;
  char* end = nullptr;
  std::strtod(s.c_str(), &end);
  return end == s.c_str() + s.size();
}

} // namespace

IngestReport ingest_stream(std::istream& in) {
  IngestReport report;
  std::string line;
  std::size_t line_no = 0;
  bool first_content = true;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    const auto fields = split_csv_line(line);
    if (first_content) {
      first_content = false;
      if (fields.size() >= 2 && !parses_as_number(fields[1])) continue; // header
    }
    if (fields.size() < 3 || fields.size() > 5) {
      std::ostringstream msg;
      msg << "ingest: line " << line_no << ": expected 3-5 fields, got "
          << fields.size();
      throw ConfigError(msg.str());
    }
    GeneRecord rec;
    rec.id = fields[0];
    try {
      std::size_t pos = 0;
      rec.ybar = std::stod(fields[1], &pos);
      if (pos != fields[1].size()) throw std::invalid_argument("trailing");
      rec.s2 = std::stod(fields[2], &pos);
      if (pos != fields[2].size()) throw std::invalid_argument("trailing");
      if (fields.size() >= 4) rec.n = std::stoi(fields[3]);
      if (fields.size() >= 5) rec.df = std::stoi(fields[4]);
    } catch (const std::exception&) {
      std::ostringstream msg;
      msg << "ingest: line " << line_no << ": malformed numeric field";
      throw ConfigError(msg.str());
    }
    if (rec.s2 < 0.0) {
      report.rejected.emplace_back(line_no, "negative sample variance");
      continue;
    }
    if (rec.n < 2) {
      report.rejected.emplace_back(line_no, "replicate count below 2");
      continue;
    }
    if (rec.df < 1) {
      report.rejected.emplace_back(line_no, "variance degrees of freedom below 1");
      continue;
    }
    report.records.push_back(std::move(rec));
  }
  return report;
}

IngestReport ingest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("ingest: cannot open '" + path + "'");
  return ingest_stream(in);
}

// ---------------------------------------------------------------------------
// eBayes fit
// ---------------------------------------------------------------------------

EBayesFit fit_variance_prior(std::span<const GeneRecord> records,
                             std::optional<std::pair<double, double>> override_fit,
                             double laplace_rate) {
  if (override_fit) {
    const auto [nu0, s0sq] = *override_fit;
    if (!(nu0 > 0.0) || !(s0sq > 0.0))
      throw DomainError("fit_variance_prior: override values must be > 0");
    return EBayesFit{nu0, s0sq, laplace_rate};
  }
  if (records.size() < 10)
    throw PreconditionError("fit_variance_prior: need at least 10 records to fit");

  // log(s^2) = log(nu0*s0sq) - log chi2_nu0 + log chi2_df - log df, so its
  // mean and variance identify (nu0, s0sq) through di/trigamma moments.
  int df = records.front().df;
  std::vector<double> logs;
  logs.reserve(records.size());
  for (const auto& r : records) {
    if (r.df != df)
      throw PreconditionError(
          "fit_variance_prior: records must share the variance degrees of freedom");
    if (r.s2 > 0.0) logs.push_back(std::log(r.s2));
  }
  if (logs.size() < 10)
    throw PreconditionError("fit_variance_prior: too few positive variances");
  double mean = 0.0;
  for (double v : logs) mean += v;
  mean /= static_cast<double>(logs.size());
  double var = 0.0;
  for (double v : logs) var += (v - mean) * (v - mean);
  var /= static_cast<double>(logs.size() - 1);

  const double target = var - trigamma(0.5 * df);
  if (!(target > 1e-8))
    throw NumericError(
        "fit_variance_prior: sample variances too concentrated to identify "
        "nu0; supply an override");

  // trigamma(nu0/2) = target, trigamma decreasing
  double lo = 1e-3, hi = 1e6;
  if (trigamma(0.5 * lo) < target)
    throw NumericError("fit_variance_prior: variance fit out of range; supply an override");
  for (int i = 0; i < 300 && hi - lo > 1e-10 * std::max(1.0, lo); ++i) {
    const double mid = 0.5 * (lo + hi);
    if (trigamma(0.5 * mid) > target)
      lo = mid;
    else
      hi = mid;
  }
  const double nu0 = 0.5 * (lo + hi);
  const double log_nu0_s0sq = mean + digamma(0.5 * nu0) - digamma(0.5 * df) +
                              std::log(static_cast<double>(df));
  const double s0sq = std::exp(log_nu0_s0sq) / nu0;
  return EBayesFit{nu0, s0sq, laplace_rate};
}

// ---------------------------------------------------------------------------
// Moderated statistics
// ---------------------------------------------------------------------------

double moderated_s2(const GeneRecord& record, const EBayesFit& fit) {
  return (fit.nu0 * fit.s0sq + record.df * record.s2) / (fit.nu0 + record.df);
}

double moderated_t(const GeneRecord& record, const EBayesFit& fit) {
  const double stilde = std::sqrt(moderated_s2(record, fit));
  return record.ybar / (stilde / std::sqrt(static_cast<double>(record.n)));
}

double moderated_p(const GeneRecord& record, const EBayesFit& fit) {
  const double t = moderated_t(record, fit);
  return 2.0 * (1.0 - t_cdf(std::fabs(t), fit.nu0 + record.df));
}

SelectionRule MicroRule::to_selection_rule() const {
  if (kind == Kind::ModT)
    return SelectionRule::stat_threshold("moderated_t", cutoff,
                                         SelectionRule::Direction::AbsGreater);
  return SelectionRule::loss_threshold("directional", cutoff);
}

// ---------------------------------------------------------------------------
// MicroModel
// ---------------------------------------------------------------------------

struct MicroModel::Impl {
  EBayesFit fit;
  int n;
  int df;
  Options opts;
  double nu_post;
  double sqrt_n;

  // sigma^2 quadrature in log space; w_sig folds the prior density and the
  // log-space Jacobian.
  std::vector<double> sig2, w_sig;
  // s^2 log grid; the chi-square density enters per (s2, sigma2) pair.
  std::vector<double> s2v, w_s2; // w_s2 = log-space trapezoid weight * s2

  mutable std::once_flag g_flag, tab_flag;
  mutable std::vector<double> yg;           // |ybar| grid
  mutable std::vector<double> g_all, g_neg; // [iy * nsig + j]
  mutable std::vector<double> m_tab, rho_tab; // [iy * ns2 + k]

  Impl(EBayesFit f, int n_, int df_, Options o)
      : fit(f), n(n_), df(df_), opts(o) {
    if (!(fit.nu0 > 0.0) || !(fit.s0sq > 0.0) || !(fit.laplace_rate > 0.0))
      throw DomainError("MicroModel: fit hyperparameters must be > 0");
    if (n < 2 || df < 1) throw DomainError("MicroModel: invalid n/df");
    nu_post = fit.nu0 + df;
    sqrt_n = std::sqrt(static_cast<double>(n));

    const double q = opts.tail_quantile;
    const double scale = fit.nu0 * fit.s0sq;
    const double sig2_lo = scale / chisq_quantile(1.0 - q, fit.nu0) / 1.5;
    const double sig2_hi = scale / chisq_quantile(q, fit.nu0) * 1.5;
    build_log_grid(sig2_lo, sig2_hi, opts.sigma_nodes, sig2, w_sig);
    for (std::size_t j = 0; j < sig2.size(); ++j)
      w_sig[j] *= sig2[j] * sichisq_density(sig2[j]);

    const double dfd = static_cast<double>(df);
    const double s2_lo = sig2_lo * chisq_quantile(q, dfd) / dfd / 1.5;
    const double s2_hi = sig2_hi * chisq_quantile(1.0 - q, dfd) / dfd * 1.5;
    build_log_grid(s2_lo, s2_hi, opts.s2_nodes, s2v, w_s2);
    for (std::size_t k = 0; k < s2v.size(); ++k) w_s2[k] *= s2v[k];
  }

  static void build_log_grid(double lo, double hi, std::size_t n_nodes,
                             std::vector<double>& vals,
                             std::vector<double>& weights) {
    const Grid g = Grid::uniform(std::log(lo), std::log(hi), n_nodes);
    vals.assign(g.nodes().begin(), g.nodes().end());
    weights.assign(g.weights().begin(), g.weights().end());
    for (auto& v : vals) v = std::exp(v);
  }

  double sichisq_density(double sig2_val) const {
    const double half_nu = 0.5 * fit.nu0;
    return std::exp(half_nu * std::log(half_nu * fit.s0sq) -
                    std::lgamma(half_nu) -
                    (half_nu + 1.0) * std::log(sig2_val) -
                    half_nu * fit.s0sq / sig2_val);
  }

  double p_s2_given_sig2(double s2_val, double sig2_val) const {
    const double dfd = static_cast<double>(df);
    const double x = dfd * s2_val / sig2_val;
    return dfd / sig2_val * std::exp(chi2_log_density(x, dfd));
  }

  double mod_s2(double s2_val) const {
    return (fit.nu0 * fit.s0sq + df * s2_val) / nu_post;
  }

  double cutoff_modt(double a, double s2_val) const {
    return a * std::sqrt(mod_s2(s2_val)) / sqrt_n;
  }

  // Selection happens when |ybar| lies in a per-s2 band [lo, hi); moderated-t
  // rules have hi = +inf, posterior-loss rules can close again at large
  // |ybar| where the prior blames extreme means on noise.
  double prs_mu(std::span<const Interval> bands, double mu) const {
    double acc = 0.0;
    for (std::size_t j = 0; j < sig2.size(); ++j) {
      const double se = std::sqrt(sig2[j]) / sqrt_n;
      double inner = 0.0;
      for (std::size_t k = 0; k < s2v.size(); ++k) {
        const Interval band = bands[k];
        if (std::isinf(band.lo)) continue;
        const double tails =
            normal_interval_mass(band.lo, band.hi, mu, se) +
            normal_interval_mass(-band.hi, -band.lo, mu, se);
        inner += w_s2[k] * p_s2_given_sig2(s2v[k], sig2[j]) * tails;
      }
      acc += w_sig[j] * inner;
    }
    return std::clamp(acc, 0.0, 1.0);
  }

  std::vector<Interval> modt_bands(double a) const {
    std::vector<Interval> bands(s2v.size());
    for (std::size_t k = 0; k < s2v.size(); ++k)
      bands[k] = {cutoff_modt(a, s2v[k]), kInf};
    return bands;
  }

  // ---- Laplace-by-normal convolution tables over (|ybar|, sigma) ----

  void ensure_g() const {
    std::call_once(g_flag, [this] {
      const std::size_t ny = opts.ybar_nodes;
      const std::size_t nsig = sig2.size();
      yg.resize(ny);
      for (std::size_t i = 0; i < ny; ++i)
        yg[i] = opts.ybar_max * static_cast<double>(i) /
                static_cast<double>(ny - 1);
      g_all.assign(ny * nsig, 0.0);
      g_neg.assign(ny * nsig, 0.0);
      const double rate = fit.laplace_rate;
      for (std::size_t j = 0; j < nsig; ++j) {
        const double tau = std::sqrt(sig2[j]) / sqrt_n;
        for (std::size_t i = 0; i < ny; ++i) {
          const double y = yg[i];
          const Grid::Segment seg_lik{y - 8.0 * tau, y + 8.0 * tau,
                                      opts.mu_segment_nodes};
          const Grid::Segment seg_prior{-6.0 / rate, 6.0 / rate,
                                        opts.mu_segment_nodes};
          const Grid::Segment segs[2] = {seg_lik, seg_prior};
          const Grid mugrid = Grid::composite(segs);
          const auto mus = mugrid.nodes();
          double all = 0.0, neg = 0.0;
          double prev_v = 0.0;
          for (std::size_t t = 0; t < mus.size(); ++t) {
            const double mu = mus[t];
            const double v = 0.5 * rate * std::exp(-rate * std::fabs(mu)) *
                             normal_pdf((y - mu) / tau) / tau;
            if (t > 0) {
              const double cell = 0.5 * (v + prev_v) * (mus[t] - mus[t - 1]);
              all += cell;
              if (mu <= 0.0) neg += cell;
            }
            prev_v = v;
          }
          g_all[i * nsig + j] = all;
          g_neg[i * nsig + j] = neg;
        }
      }
    });
  }

  double g_lookup(const std::vector<double>& table, double yabs,
                  std::size_t j) const {
    const std::size_t nsig = sig2.size();
    const double ymax = yg.back();
    if (yabs >= ymax) return table[(yg.size() - 1) * nsig + j];
    const double pos = yabs / ymax * static_cast<double>(yg.size() - 1);
    const std::size_t i = static_cast<std::size_t>(pos);
    const double t = pos - static_cast<double>(i);
    return table[i * nsig + j] * (1.0 - t) + table[(i + 1) * nsig + j] * t;
  }

  struct RhoParts {
    double err;
    double all;
  };

  // Directional-error and total posterior mass factors at (|ybar|, s2). By
  // symmetry the error side is always the opposite-sign lobe of |ybar|.
  RhoParts rho_parts(double yabs, double s2_val) const {
    ensure_g();
    double num = 0.0, den = 0.0;
    for (std::size_t j = 0; j < sig2.size(); ++j) {
      const double pw = w_sig[j] * p_s2_given_sig2(s2_val, sig2[j]);
      num += pw * g_lookup(g_neg, yabs, j);
      den += pw * g_lookup(g_all, yabs, j);
    }
    return {num, den};
  }

  void ensure_tables() const {
    ensure_g();
    std::call_once(tab_flag, [this] {
      const std::size_t ny = yg.size();
      const std::size_t ns2 = s2v.size();
      const std::size_t nsig = sig2.size();
      std::vector<double> pks(ns2 * nsig);
      for (std::size_t k = 0; k < ns2; ++k)
        for (std::size_t j = 0; j < nsig; ++j)
          pks[k * nsig + j] = w_sig[j] * p_s2_given_sig2(s2v[k], sig2[j]);
      m_tab.assign(ny * ns2, 0.0);
      rho_tab.assign(ny * ns2, 0.0);
      for (std::size_t i = 0; i < ny; ++i) {
        for (std::size_t k = 0; k < ns2; ++k) {
          double den = 0.0, num = 0.0;
          for (std::size_t j = 0; j < nsig; ++j) {
            const double pw = pks[k * nsig + j];
            den += pw * g_all[i * nsig + j];
            num += pw * g_neg[i * nsig + j];
          }
          m_tab[i * ns2 + k] = den;
          rho_tab[i * ns2 + k] = den > 0.0 ? num / den : 0.0;
        }
      }
    });
  }

  // |ybar| band over which rho stays at or below `s` for the s2-grid row k.
  Interval rho_band(double s, std::size_t k) const {
    const std::size_t ny = yg.size();
    const std::size_t ns2 = s2v.size();
    auto at = [&](std::size_t i) { return rho_tab[i * ns2 + k]; };
    double lo = kInf;
    std::size_t enter = 0;
    if (at(0) <= s) {
      lo = 0.0;
    } else {
      for (std::size_t i = 1; i < ny; ++i) {
        if (at(i) <= s) {
          const double t = (at(i - 1) - s) / std::max(at(i - 1) - at(i), 1e-300);
          lo = yg[i - 1] + t * (yg[i] - yg[i - 1]);
          enter = i;
          break;
        }
      }
    }
    if (std::isinf(lo)) return {kInf, kInf}; // never selected at this s2
    for (std::size_t i = enter + 1; i < ny; ++i) {
      if (at(i) > s) {
        const double t = (s - at(i - 1)) / std::max(at(i) - at(i - 1), 1e-300);
        return {lo, yg[i - 1] + t * (yg[i] - yg[i - 1])};
      }
    }
    return {lo, kInf};
  }

  std::vector<Interval> rule_bands(const MicroRule& rule) const {
    if (rule.kind == MicroRule::Kind::ModT) return modt_bands(rule.cutoff);
    ensure_tables();
    std::vector<Interval> bands(s2v.size());
    for (std::size_t k = 0; k < s2v.size(); ++k) bands[k] = rho_band(rule.cutoff, k);
    return bands;
  }

  struct RegionIntegrals {
    double loss_mass; // integral of rho * m over the region
    double mass;      // integral of m over the region
  };

  RegionIntegrals integrate_region(std::span<const Interval> bands) const {
    ensure_tables();
    const std::size_t ny = yg.size();
    const std::size_t ns2 = s2v.size();
    const double hy = yg[1] - yg[0];
    double num = 0.0, den = 0.0;
    for (std::size_t k = 0; k < ns2; ++k) {
      const double lo = bands[k].lo;
      const double hi = std::min(bands[k].hi, yg.back());
      if (std::isinf(lo) || lo >= hi) continue;
      auto m_at = [&](std::size_t i) { return m_tab[i * ns2 + k]; };
      auto lm_at = [&](std::size_t i) {
        return rho_tab[i * ns2 + k] * m_tab[i * ns2 + k];
      };
      auto value_at = [&](double y, auto&& f) {
        const double pos = y / hy;
        const auto i = std::min(ny - 2, static_cast<std::size_t>(pos));
        const double t = pos - static_cast<double>(i);
        return f(i) * (1.0 - t) + f(i + 1) * t;
      };
      // whole cells inside [lo, hi] plus linearly interpolated partial cells
      const auto i0 = static_cast<std::size_t>(
          std::min(std::ceil(lo / hy), static_cast<double>(ny - 1)));
      const auto i1 = static_cast<std::size_t>(
          std::max(0.0, std::floor(hi / hy)));
      double mk = 0.0, lk = 0.0;
      if (i0 > i1) { // band inside a single table cell
        mk = 0.5 * (value_at(lo, m_at) + value_at(hi, m_at)) * (hi - lo);
        lk = 0.5 * (value_at(lo, lm_at) + value_at(hi, lm_at)) * (hi - lo);
        num += w_s2[k] * lk;
        den += w_s2[k] * mk;
        continue;
      }
      for (std::size_t i = i0; i < i1; ++i) {
        mk += 0.5 * (m_at(i) + m_at(i + 1)) * hy;
        lk += 0.5 * (lm_at(i) + lm_at(i + 1)) * hy;
      }
      if (i0 > 0 && yg[i0] > lo) {
        const double m_c = value_at(lo, m_at);
        const double l_c = value_at(lo, lm_at);
        mk += 0.5 * (m_c + m_at(i0)) * (yg[i0] - lo);
        lk += 0.5 * (l_c + lm_at(i0)) * (yg[i0] - lo);
      }
      if (i1 + 1 < ny && hi > yg[i1]) {
        const double m_c = value_at(hi, m_at);
        const double l_c = value_at(hi, lm_at);
        mk += 0.5 * (m_at(i1) + m_c) * (hi - yg[i1]);
        lk += 0.5 * (lm_at(i1) + l_c) * (hi - yg[i1]);
      }
      num += w_s2[k] * lk;
      den += w_s2[k] * mk;
    }
    return {num, den};
  }
};

MicroModel::MicroModel(EBayesFit fit, int n, int df)
    : MicroModel(fit, n, df, Options()) {}

MicroModel::MicroModel(EBayesFit fit, int n, int df, Options opts)
    : impl_(std::make_unique<Impl>(fit, n, df, opts)) {}

MicroModel::~MicroModel() = default;
MicroModel::MicroModel(MicroModel&&) noexcept = default;
MicroModel& MicroModel::operator=(MicroModel&&) noexcept = default;

const EBayesFit& MicroModel::fit() const { return impl_->fit; }

double MicroModel::moderated_s2(double s2) const { return impl_->mod_s2(s2); }

double MicroModel::moderated_t(double ybar, double s2) const {
  return ybar / (std::sqrt(impl_->mod_s2(s2)) / impl_->sqrt_n);
}

double MicroModel::selection_prob_mu(double a, double mu) const {
  const auto bands = impl_->modt_bands(a);
  return impl_->prs_mu(bands, mu);
}

double MicroModel::selection_prob_refinement_delta(double a, double mu) const {
  Options doubled = impl_->opts;
  doubled.sigma_nodes = 2 * doubled.sigma_nodes - 1;
  doubled.s2_nodes = 2 * doubled.s2_nodes - 1;
  MicroModel fine(impl_->fit, impl_->n, impl_->df, doubled);
  const double coarse = selection_prob_mu(a, mu);
  const double refined = fine.selection_prob_mu(a, mu);
  return std::fabs(refined - coarse) / std::max(refined, 1e-300);
}

double MicroModel::rho(double ybar, double s2) const {
  const auto parts = impl_->rho_parts(std::fabs(ybar), s2);
  if (!(parts.all > 0.0))
    throw NumericError("MicroModel::rho: vanishing predictive density");
  return parts.err / parts.all;
}

double MicroModel::marginal(double ybar, double s2) const {
  return impl_->rho_parts(std::fabs(ybar), s2).all;
}

PosteriorGrid MicroModel::gene_posterior(const GeneRecord& record,
                                         std::optional<MicroRule> rule,
                                         GeneEffectPrior effect_prior) const {
  if (record.n != impl_->n || record.df != impl_->df)
    throw DomainError("gene_posterior: record n/df does not match the model");
  const double q_const = impl_->fit.nu0 * impl_->fit.s0sq + record.df * record.s2;
  const double nmul = static_cast<double>(record.n);
  const double expo = 0.5 * (impl_->nu_post + 1.0);
  const double scale = std::sqrt(impl_->mod_s2(record.s2)) / impl_->sqrt_n;
  const double rate = impl_->fit.laplace_rate;

  if (rule) {
    const bool passes =
        rule->kind == MicroRule::Kind::ModT
            ? std::fabs(moderated_t(record.ybar, record.s2)) > rule->cutoff
            : rho(record.ybar, record.s2) <= rule->cutoff;
    if (!passes)
      throw PreconditionError("gene_posterior: record does not pass the rule");
  }

  // the rule-free flat posterior is an exact t density; cover its polynomial
  // tails far enough for pointwise agreement at the 1e-8 level
  const bool wide = !rule.has_value() && effect_prior == GeneEffectPrior::Flat;
  const double reach = wide ? 45.0 : 14.0;
  std::vector<Grid::Segment> segments;
  const double lo = record.ybar - reach * scale;
  const double hi = record.ybar + reach * scale;
  segments.push_back({lo, hi, wide ? std::size_t{12001} : std::size_t{4001}});
  if (effect_prior == GeneEffectPrior::Laplace) {
    const double plo = std::max(lo, -3.0 / rate);
    const double phi = std::min(hi, 3.0 / rate);
    if (plo < phi) segments.push_back({plo, phi, 1201});
  }
  const Grid grid = Grid::composite(segments);
  const auto mus = grid.nodes();

  // selection probability on a coarse sub-grid, interpolated onto the fine one
  std::vector<double> prs_coarse;
  std::vector<double> mu_coarse;
  const bool divide =
      rule.has_value() && effect_prior == GeneEffectPrior::Flat;
  if (divide) {
    const auto bands = impl_->rule_bands(*rule);
    const std::size_t nc = 161;
    mu_coarse.resize(nc);
    prs_coarse.resize(nc);
    for (std::size_t i = 0; i < nc; ++i) {
      mu_coarse[i] =
          lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(nc - 1);
      prs_coarse[i] = impl_->prs_mu(bands, mu_coarse[i]);
    }
  }
  auto prs_interp = [&](double mu) {
    if (mu <= mu_coarse.front()) return prs_coarse.front();
    if (mu >= mu_coarse.back()) return prs_coarse.back();
    const double pos = (mu - mu_coarse.front()) /
                       (mu_coarse.back() - mu_coarse.front()) *
                       static_cast<double>(mu_coarse.size() - 1);
    const auto i = static_cast<std::size_t>(pos);
    const double t = pos - static_cast<double>(i);
    return prs_coarse[i] * (1.0 - t) + prs_coarse[i + 1] * t;
  };

  std::vector<double> log_u(mus.size());
  for (std::size_t i = 0; i < mus.size(); ++i) {
    const double mu = mus[i];
    const double d = mu - record.ybar;
    double lu = -expo * std::log(q_const + nmul * d * d);
    if (effect_prior == GeneEffectPrior::Laplace)
      lu += std::log(0.5 * rate) - rate * std::fabs(mu);
    if (divide) {
      const double p = prs_interp(mu);
      lu -= std::log(std::max(p, 1e-300));
    }
    log_u[i] = lu;
  }

  std::vector<double> cusps;
  if (effect_prior == GeneEffectPrior::Laplace) cusps.push_back(0.0);
  return PosteriorGrid(grid, std::move(log_u), {}, std::move(cusps));
}

RiskReport MicroModel::risk(const MicroRule& rule, double family_size) const {
  const auto bands = impl_->rule_bands(rule);
  const auto parts = impl_->integrate_region(bands);
  if (!(parts.mass > 0.0))
    throw NumericError("MicroModel::risk: degenerate rule, Pr(S) = 0");
  const double risk = parts.loss_mass / parts.mass;
  const double sel = 2.0 * parts.mass; // both sign lobes by symmetry
  return RiskReport{rule.to_selection_rule(),
                    risk,
                    sel,
                    family_size * sel,
                    Loss::directional(),
                    risk,
                    family_size};
}

namespace {

double bisect_risk(const std::function<double(double)>& risk_at, double lo,
                   double hi, double q, const char* what) {
  const int n_probe = 50;
  std::vector<double> params(n_probe), risks(n_probe);
  for (int i = 0; i < n_probe; ++i) {
    params[i] = lo + (hi - lo) * static_cast<double>(i) / (n_probe - 1);
    risks[i] = risk_at(params[i]);
  }
  int dir = 0;
  const double flat_tol =
      1e-6 + 1e-3 * std::fabs(risks.back() - risks.front()) / n_probe;
  for (int i = 1; i < n_probe; ++i) {
    const double d = risks[i] - risks[i - 1];
    if (std::fabs(d) < flat_tol) continue;
    const int s = d > 0 ? 1 : -1;
    if (dir == 0)
      dir = s;
    else if (dir != s)
      throw CalibrationError(std::string(what) +
                             ": risk curve not monotone over the bracket");
  }
  int idx = -1;
  for (int i = 1; i < n_probe; ++i)
    if ((risks[i - 1] - q) * (risks[i] - q) <= 0.0) {
      idx = i;
      break;
    }
  if (idx < 0) {
    std::ostringstream msg;
    msg << what << ": target " << q << " outside achieved risk range ["
        << *std::min_element(risks.begin(), risks.end()) << ", "
        << *std::max_element(risks.begin(), risks.end()) << "]";
    throw CalibrationError(msg.str());
  }
  double plo = params[idx - 1], phi = params[idx];
  double rlo = risks[idx - 1];
  for (int i = 0; i < 80 && phi - plo > 1e-5 * std::max(1.0, phi); ++i) {
    const double mid = 0.5 * (plo + phi);
    const double r = risk_at(mid);
    if ((r - q) * (rlo - q) <= 0.0) {
      phi = mid;
    } else {
      plo = mid;
      rlo = r;
    }
  }
  return 0.5 * (plo + phi);
}

} // namespace

double MicroModel::calibrate_modt(double q) const {
  // beyond |t| ~ 6 the selection probability is too small for stable tables
  return bisect_risk(
      [this](double a) { return risk(MicroRule::modt(a)).risk; }, 1.2, 6.0, q,
      "calibrate_modt");
}

double MicroModel::calibrate_rho(double q) const {
  return bisect_risk(
      [this](double s) { return risk(MicroRule::rho(s)).risk; }, 0.008, 0.47,
      q, "calibrate_rho");
}

double MicroModel::fit_laplace_rate(std::span<const GeneRecord> records) const {
  if (records.empty())
    throw PreconditionError("fit_laplace_rate: no records");
  Options small = impl_->opts;
  small.sigma_nodes = 81;
  small.ybar_nodes = 361;
  auto loglik = [&](double rate) {
    EBayesFit f = impl_->fit;
    f.laplace_rate = rate;
    MicroModel m(f, impl_->n, impl_->df, small);
    double ll = 0.0;
    for (const auto& r : records)
      ll += std::log(std::max(m.marginal(r.ybar, r.s2), 1e-300));
    return ll;
  };
  // coarse grid then golden-section refinement
  double best_rate = 1.0, best_ll = -kInf;
  for (double rate = 1.0; rate <= 40.0; rate *= 1.45) {
    const double ll = loglik(rate);
    if (ll > best_ll) {
      best_ll = ll;
      best_rate = rate;
    }
  }
  double lo = best_rate / 1.45, hi = best_rate * 1.45;
  const double gr = 0.6180339887498949;
  double x1 = hi - gr * (hi - lo), x2 = lo + gr * (hi - lo);
  double f1 = loglik(x1), f2 = loglik(x2);
  for (int i = 0; i < 30 && hi - lo > 0.02; ++i) {
    if (f1 < f2) {
      lo = x1;
      x1 = x2;
      f1 = f2;
      x2 = lo + gr * (hi - lo);
      f2 = loglik(x2);
    } else {
      hi = x2;
      x2 = x1;
      f2 = f1;
      x1 = hi - gr * (hi - lo);
      f1 = loglik(x1);
    }
  }
  return 0.5 * (lo + hi);
}

// ---------------------------------------------------------------------------
// Free wrappers
// ---------------------------------------------------------------------------

double selection_prob_mu(const MicroRule& rule, const EBayesFit& fit, double mu,
                         int n, int df) {
  if (rule.kind != MicroRule::Kind::ModT)
    throw UnsupportedError(
        "selection_prob_mu: expected a moderated-t threshold rule");
  MicroModel model(fit, n, df);
  return model.selection_prob_mu(rule.cutoff, mu);
}

PosteriorGrid gene_posterior(const GeneRecord& record, const EBayesFit& fit,
                             std::optional<MicroRule> rule,
                             GeneEffectPrior effect_prior) {
  MicroModel model(fit, record.n, record.df);
  return model.gene_posterior(record, rule, effect_prior);
}

RiskReport gene_risk(const MicroRule& rule, const EBayesFit& fit, int n, int df,
                     double family_size) {
  MicroModel model(fit, n, df);
  return model.risk(rule, family_size);
}

std::size_t count_discoveries(std::span<const GeneRecord> records,
                              const MicroRule& rule, const EBayesFit& fit,
                              unsigned workers) {
  if (records.empty()) return 0;
  if (rule.kind == MicroRule::Kind::ModT) {
    std::size_t count = 0;
    for (const auto& r : records)
      if (std::fabs(moderated_t(r, fit)) > rule.cutoff) ++count;
    return count;
  }
  MicroModel model(fit, records.front().n, records.front().df);
  model.rho(0.0, fit.s0sq); // build the shared tables before the gene loop
  std::vector<unsigned char> hit(records.size(), 0);
  parallel_for(records.size(), workers, [&](std::size_t i) {
    hit[i] = model.rho(records[i].ybar, records[i].s2) <= rule.cutoff ? 1 : 0;
  });
  std::size_t count = 0;
  for (unsigned char h : hit) count += h;
  return count;
}

TestingResult bh_on_moderated(std::span<const GeneRecord> records,
                              const EBayesFit& fit, double q) {
  std::vector<double> pvalues;
  pvalues.reserve(records.size());
  for (const auto& r : records) pvalues.push_back(moderated_p(r, fit));
  return bh_procedure(pvalues, q);
}

TestingResult bh_on_raw_t(std::span<const GeneRecord> records, double q) {
  std::vector<double> pvalues;
  pvalues.reserve(records.size());
  for (const auto& r : records) {
    if (r.s2 <= 0.0) {
      pvalues.push_back(r.ybar == 0.0 ? 1.0 : 0.0);
      continue;
    }
    const double t =
        r.ybar / (std::sqrt(r.s2) / std::sqrt(static_cast<double>(r.n)));
    pvalues.push_back(2.0 * (1.0 - t_cdf(std::fabs(t), r.df)));
  }
  return bh_procedure(pvalues, q);
}

} // namespace sabayes
