#pragma once

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "sabayes/posterior.hpp"

namespace sabayes {

/// saBayes risk of a selection rule together with its selection diagnostics.
struct RiskReport {
  SelectionRule rule;
  double risk;
  double selection_prob;
  double expected_discoveries; // family_size * selection_prob
  Loss loss;
  double ev_over_er;  // diagnostic; coincides with risk in the random effect model
  double family_size;

  /// JSON with exactly: rule, risk, selection_prob, expected_discoveries, loss.
  std::string to_json() const;
};

/// Density of y under the truncated random-effect model, normalized over S.
double truncated_marginal(const Prior& prior, const Likelihood& lik,
                          const SelectionRule& rule, double y);

/// Unadjusted ("random" theta) posterior expected loss rho-tilde(y).
double unadjusted_posterior_loss(const Prior& prior, const Likelihood& lik,
                                 const Loss& loss, double y);

/// r_S = E_{m_S}[rho-tilde] over the selection region (ratio form,
/// expression evaluated by parameter-side quadrature with closed-form tails).
RiskReport sabayes_risk(const Prior& prior, const Likelihood& lik,
                        const SelectionRule& rule, const Loss& loss,
                        double family_size = 1.0);

/// Observation-side evaluation of the same risk. per_y_normalized toggles
/// between the expectation-of-posterior-loss form and the ratio-of-integrals
/// form (both integrate over the same y grid).
double sabayes_risk_marginal_form(const Prior& prior, const Likelihood& lik,
                                  const SelectionRule& rule, const Loss& loss,
                                  bool per_y_normalized);

enum class RuleFamily { TwoSided, OneSided, LossThreshold };

struct CalibrationResult {
  SelectionRule rule;
  double achieved_risk;
};

/// Find the family member whose saBayes risk matches q (|risk - q| <= 1e-3).
/// The risk curve's monotonicity over the bracket is asserted on 50 probe
/// points before bisection.
CalibrationResult calibrate_rule(RuleFamily family, const Prior& prior,
                                 const Likelihood& lik, const Loss& loss,
                                 double q, double bracket_lo = 0.0,
                                 double bracket_hi = 10.0, double tol = 1e-4);

/// Attach a scalar observation region to a LossThreshold rule: the set
/// {y : rho-tilde(y) <= cutoff}. TwoSided/OneSided rules pass through.
SelectionRule resolve_rule(const SelectionRule& rule, const Prior& prior,
                           const Likelihood& lik);

/// Selection-adjusted prior probability that theta lies outside A_marg.
double constant_discovery_pfdr(const Prior& prior, const Likelihood& lik,
                               const SelectionRule& rule,
                               const std::vector<Interval>& a_marg);

/// Parametric empirical-Bayes prior fit by marginal-likelihood maximization.
/// Families: "laplace" (rate, 1-D search), "normal" (variance, 1-D search),
/// "laplace2:<w>" (two Laplace rates sharing weight w, 2-D search).
Prior fit_ebayes_prior(const std::string& family, std::span<const double> y,
                       const Likelihood& lik);

struct TwoGroupReport {
  double pfdr;
  /// (cutoff, pFDR of the nested region at that cutoff)
  std::vector<std::pair<double, double>> qvalue_curve;
  std::function<double(double)> local_fdr;
};

/// Two-group mixture specialization: pFDR of the rejection region, the nested
/// q-value curve, and the local fdr.
TwoGroupReport two_group(double pi0, const Prior& f0, const Prior& f1,
                         const SelectionRule& gamma);

/// Selection-adjusted posterior P(H=0|y) under truncated likelihoods
/// f_j / Pr(Gamma|H=j) for "fixed"/non-informative H.
double fixed_two_group_posterior(double pi0, const Prior& f0, const Prior& f1,
                                 const SelectionRule& gamma, double y);

} // namespace sabayes
