#pragma once

#include <cstddef>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sabayes/multiplicity.hpp"
#include "sabayes/posterior.hpp"
#include "sabayes/risk.hpp"

namespace sabayes {

struct GeneRecord {
  std::string id;
  double ybar = 0.0;
  double s2 = 0.0;
  int n = 4;
  int df = 3;
};

struct IngestReport {
  std::vector<GeneRecord> records;
  std::vector<std::pair<std::size_t, std::string>> rejected; // (line, reason)
};

/// Read a gene summary CSV with header id,ybar,s2[,n,df]. Rows violating the
/// record invariants land in `rejected`; malformed rows throw with the line
/// number.
IngestReport ingest(const std::string& path);
IngestReport ingest_stream(std::istream& in);

struct EBayesFit {
  double nu0;
  double s0sq;
  double laplace_rate = 8.5;
};

/// Scaled-inverse-chi-square variance prior fit by matching the first two
/// moments of log(s^2); an override passes through unchanged.
EBayesFit fit_variance_prior(std::span<const GeneRecord> records,
                             std::optional<std::pair<double, double>> override_fit,
                             double laplace_rate = 8.5);

double moderated_s2(const GeneRecord& record, const EBayesFit& fit);
double moderated_t(const GeneRecord& record, const EBayesFit& fit);
/// Two-sided p-value of the moderated t under nu0 + df degrees of freedom.
double moderated_p(const GeneRecord& record, const EBayesFit& fit);

/// Gene-level selection rules: a moderated-t magnitude threshold or a cutoff
/// on the posterior directional loss.
struct MicroRule {
  enum class Kind { ModT, Rho };
  Kind kind;
  double cutoff;

  static MicroRule modt(double a) { return {Kind::ModT, a}; }
  static MicroRule rho(double s) { return {Kind::Rho, s}; }
  SelectionRule to_selection_rule() const;
};

enum class GeneEffectPrior { Flat, Laplace };

/// Shared quadrature state for the mean-plus-sample-variance model under the
/// eBayes prior Laplace(rate) x ScaledInvChiSq(nu0, s0sq). Tables are built
/// lazily and reused across genes; all methods are const and thread-safe
/// after the first risk/rho call.
class MicroModel {
public:
  struct Options {
    std::size_t sigma_nodes = 121;
    std::size_t s2_nodes = 201;
    std::size_t ybar_nodes = 641;
    std::size_t mu_segment_nodes = 161;
    double ybar_max = 5.5;
    double tail_quantile = 1e-6;
  };

  explicit MicroModel(EBayesFit fit, int n = 4, int df = 3);
  MicroModel(EBayesFit fit, int n, int df, Options opts);
  ~MicroModel();
  MicroModel(MicroModel&&) noexcept;
  MicroModel& operator=(MicroModel&&) noexcept;

  const EBayesFit& fit() const;

  double moderated_s2(double s2) const;
  double moderated_t(double ybar, double s2) const;

  /// Pr(|t~| > a | mu): outer quadrature over the variance prior, middle over
  /// the sample variance, inner closed-form normal tails.
  double selection_prob_mu(double a, double mu) const;

  /// Relative change of selection_prob_mu under doubled quadrature nodes.
  double selection_prob_refinement_delta(double a, double mu) const;

  /// rho(ybar, s2): posterior probability of a directional error.
  double rho(double ybar, double s2) const;

  /// Predictive density of (ybar, s2) under the eBayes prior.
  double marginal(double ybar, double s2) const;

  PosteriorGrid gene_posterior(const GeneRecord& record,
                               std::optional<MicroRule> rule,
                               GeneEffectPrior effect_prior) const;

  RiskReport risk(const MicroRule& rule, double family_size = 1.0) const;

  double calibrate_modt(double q) const;
  double calibrate_rho(double q) const;

  /// Marginal-likelihood fit of the Laplace rate (1-D grid search + refine).
  double fit_laplace_rate(std::span<const GeneRecord> records) const;

private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

// Spec-level wrappers constructing a transient model.
double selection_prob_mu(const MicroRule& rule, const EBayesFit& fit, double mu,
                         int n = 4, int df = 3);
PosteriorGrid gene_posterior(const GeneRecord& record, const EBayesFit& fit,
                             std::optional<MicroRule> rule,
                             GeneEffectPrior effect_prior);
RiskReport gene_risk(const MicroRule& rule, const EBayesFit& fit, int n = 4,
                     int df = 3, double family_size = 1.0);
std::size_t count_discoveries(std::span<const GeneRecord> records,
                              const MicroRule& rule, const EBayesFit& fit,
                              unsigned workers = 1);
/// BH on moderated-t p-values.
TestingResult bh_on_moderated(std::span<const GeneRecord> records,
                              const EBayesFit& fit, double q);
/// BH on raw df-degree-of-freedom t p-values (t = ybar / (s/sqrt(n))).
TestingResult bh_on_raw_t(std::span<const GeneRecord> records, double q);

} // namespace sabayes
