#include "sabayes/multiplicity.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <json.hpp>

#include "sabayes/errors.hpp"
#include "sabayes/numerics.hpp"

namespace sabayes {

std::string TestingResult::to_json() const {
  nlohmann::ordered_json j;
  j["m"] = m;
  j["rejected"] = rejected;
  j["r"] = r;
  j["threshold_p"] = threshold_p;
  j["q"] = q;
  return j.dump();
}

TestingResult bh_procedure(std::span<const double> pvalues, double q) {
  if (!(q > 0.0 && q < 1.0))
    throw DomainError("bh_procedure: q must lie in (0,1)");
  TestingResult result;
  result.m = pvalues.size();
  result.q = q;
  if (pvalues.empty()) return result;

  for (double p : pvalues)
    if (!(p >= 0.0 && p <= 1.0))
      throw DomainError("bh_procedure: p-values must lie in [0,1]");

  std::vector<double> sorted(pvalues.begin(), pvalues.end());
  std::sort(sorted.begin(), sorted.end());
  const double m = static_cast<double>(sorted.size());
  std::size_t k = 0;
  for (std::size_t i = sorted.size(); i > 0; --i) {
    if (sorted[i - 1] <= q * static_cast<double>(i) / m) {
      k = i;
      break;
    }
  }
  if (k == 0) return result;

  result.threshold_p = sorted[k - 1];
  for (std::size_t i = 0; i < pvalues.size(); ++i)
    if (pvalues[i] <= result.threshold_p) result.rejected.push_back(i);
  result.r = result.rejected.size();
  return result;
}

std::vector<Interval> fcr_adjusted_cis(std::span<const IndexedObs> selected,
                                       double q, std::size_t m) {
  if (selected.empty())
    throw PreconditionError("fcr_adjusted_cis: at least one selection required");
  if (m == 0) throw DomainError("fcr_adjusted_cis: family size m must be >= 1");
  const double r = static_cast<double>(selected.size());
  const double adj = r * q / static_cast<double>(m);
  if (adj >= 1.0)
    throw DomainError("fcr_adjusted_cis: degenerate level, R*q/m >= 1");
  const double z = normal_quantile(1.0 - 0.5 * adj);
  std::vector<Interval> out;
  out.reserve(selected.size());
  for (const auto& obs : selected)
    out.push_back({obs.y - z * obs.sigma, obs.y + z * obs.sigma});
  return out;
}

DirectionalResult directional_calls(std::span<const double> y, double threshold,
                                    std::span<const double> truth) {
  if (!truth.empty() && truth.size() != y.size())
    throw DomainError("directional_calls: truth vector size mismatch");
  DirectionalResult result;
  result.calls.resize(y.size(), 0);
  result.has_truth = !truth.empty();
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (std::fabs(y[i]) > threshold) {
      result.calls[i] = y[i] > 0.0 ? 1 : -1;
      ++result.ledger.R;
      if (result.has_truth) {
        const double t = truth[i];
        const bool wrong = (result.calls[i] > 0 && t < 0.0) ||
                           (result.calls[i] < 0 && t > 0.0) || t == 0.0;
        if (wrong) ++result.ledger.V;
      }
    }
  }
  result.ledger.fcp =
      static_cast<double>(result.ledger.V) /
      std::max<std::size_t>(1, result.ledger.R);
  return result;
}

} // namespace sabayes
