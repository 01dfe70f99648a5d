#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "sabayes/model.hpp"

namespace sabayes {

struct TestingResult {
  std::size_t m = 0;
  std::vector<std::size_t> rejected; // indices into the input vector
  std::size_t r = 0;
  double threshold_p = 0.0; // realized p-value cutoff, 0 when r == 0
  double q = 0.0;

  std::string to_json() const;
};

struct CoverageLedger {
  std::size_t R = 0;
  std::size_t V = 0;
  double fcp = 0.0; // V / max(1, R)
};

/// BH step-up: reject the k smallest p-values, k = max{i : p_(i) <= q*i/m}.
/// Ties at the cutoff are all rejected.
TestingResult bh_procedure(std::span<const double> pvalues, double q);

struct IndexedObs {
  std::size_t index;
  double y;
  double sigma;
};

/// Marginal 1 - R*q/m confidence intervals for the R selected parameters.
std::vector<Interval> fcr_adjusted_cis(std::span<const IndexedObs> selected,
                                       double q, std::size_t m);

struct DirectionalResult {
  std::vector<int> calls; // +1 / -1 for selected observations, 0 otherwise
  CoverageLedger ledger;  // against truth when supplied
  bool has_truth = false;
};

/// Sign calls for |y| > threshold; with a truth vector, V counts selected
/// observations whose call disagrees with sign(theta).
DirectionalResult directional_calls(std::span<const double> y, double threshold,
                                    std::span<const double> truth = {});

} // namespace sabayes
