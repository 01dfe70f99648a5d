#pragma once

#include <string>

#include "sabayes/model.hpp"
#include "sabayes/sim.hpp"

namespace sabayes {

/// A model bundle parsed from a JSON configuration document.
struct ModelConfig {
  Prior prior = Prior::flat();
  Likelihood lik = Likelihood::normal_location(1.0);
  EffectKind kind = EffectKind::random_effect();
  std::size_t m = 0; // family/sim size when given
  std::vector<std::pair<std::size_t, Prior>> non_exchangeable;
};

ModelConfig parse_model_json(const std::string& json_text);
ModelConfig load_model_file(const std::string& path);

Prior parse_prior_json(const std::string& json_text);

/// Compact prior specs for command-line flags:
///   flat | normal:<mean>,<var> | laplace:<rate> | point:<loc> | example1
Prior parse_prior_spec(const std::string& spec);

/// Rule specs: twosided:<a> | onesided:<a> | losscutoff:<loss>:<s>
SelectionRule parse_rule_spec(const std::string& spec);

/// Canonical JSON echo of a resolved configuration (deterministic field order).
std::string canonical_model_json(const ModelConfig& config);

GenerativeSpec to_generative_spec(const ModelConfig& config);

} // namespace sabayes
