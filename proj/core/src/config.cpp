#include "sabayes/config.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "sabayes/errors.hpp"

namespace sabayes {

namespace {

using nlohmann::json;
using nlohmann::ordered_json;

double require_number(const json& j, const char* key) {
  if (!j.contains(key) || !j[key].is_number())
    throw ConfigError(std::string("config: missing numeric field '") + key + "'");
  return j[key].get<double>();
}

Prior prior_from_json(const json& j);

Prior builtin_prior(const std::string& name) {
  if (name == "flat") return Prior::flat();
  if (name == "example1")
    return Prior::mixture({{0.9, Prior::laplace(10.0)}, {0.1, Prior::laplace(1.0)}});
  throw ConfigError("config: unknown prior name '" + name + "'");
}

Prior prior_from_json(const json& j) {
  if (j.is_string()) return builtin_prior(j.get<std::string>());
  if (!j.is_object() || !j.contains("type"))
    throw ConfigError("config: prior must be an object with a 'type' field");
  const std::string type = j["type"].get<std::string>();
  if (type == "normal")
    return Prior::normal(require_number(j, "mean"), require_number(j, "var"));
  if (type == "laplace") return Prior::laplace(require_number(j, "rate"));
  if (type == "scaled_inv_chisq")
    return Prior::scaled_inv_chisq(require_number(j, "nu0"),
                                   require_number(j, "s0sq"));
  if (type == "flat") return Prior::flat();
  if (type == "point_mass") return Prior::point_mass(require_number(j, "location"));
  if (type == "two_group")
    return Prior::two_group(require_number(j, "pi0"), prior_from_json(j.at("alt")));
  if (type == "mixture") {
    if (!j.contains("components") || !j["components"].is_array())
      throw ConfigError("config: mixture prior needs a 'components' array");
    std::vector<std::pair<double, Prior>> comps;
    for (const auto& c : j["components"])
      comps.emplace_back(require_number(c, "weight"), prior_from_json(c.at("prior")));
    return Prior::mixture(std::move(comps));
  }
  throw ConfigError("config: unknown prior type '" + type + "'");
}

Likelihood likelihood_from_json(const json& j) {
  if (!j.is_object() || !j.contains("type"))
    throw ConfigError("config: likelihood must be an object with a 'type' field");
  const std::string type = j["type"].get<std::string>();
  if (type == "normal_location")
    return Likelihood::normal_location(require_number(j, "sigma"));
  if (type == "mean_and_variance")
    return Likelihood::mean_and_variance(
        static_cast<int>(require_number(j, "n")),
        static_cast<int>(require_number(j, "df")));
  throw ConfigError("config: unknown likelihood type '" + type + "'");
}

ConditionalPrior conditional_from_json(const json& j, std::string* descr) {
  if (!j.is_object() || !j.contains("family"))
    throw ConfigError("config: mixed conditional needs a 'family' field");
  const std::string family = j["family"].get<std::string>();
  if (family == "laplace") {
    *descr = "laplace(lambda)";
    return [](double lambda) { return Prior::laplace(lambda); };
  }
  if (family == "normal") {
    const double var = require_number(j, "var");
    *descr = "normal(lambda," + std::to_string(var) + ")";
    return [var](double lambda) { return Prior::normal(lambda, var); };
  }
  throw ConfigError("config: unknown conditional family '" + family + "'");
}

EffectKind kind_from_json(const json& j) {
  if (j.is_string()) {
    const std::string s = j.get<std::string>();
    if (s == "random") return EffectKind::random_effect();
    if (s == "fixed") return EffectKind::fixed_effect();
    throw ConfigError("config: unknown effect kind '" + s + "'");
  }
  if (!j.is_object() || !j.contains("type"))
    throw ConfigError("config: effect kind must be a string or typed object");
  const std::string type = j["type"].get<std::string>();
  if (type == "random") return EffectKind::random_effect();
  if (type == "fixed") return EffectKind::fixed_effect();
  if (type == "mixed") {
    std::string descr;
    ConditionalPrior cond = conditional_from_json(j.at("conditional"), &descr);
    return EffectKind::mixed(prior_from_json(j.at("hyperprior")), std::move(cond),
                             "mixed:" + descr);
  }
  throw ConfigError("config: unknown effect kind type '" + type + "'");
}

ordered_json prior_to_json(const Prior& prior);

ordered_json prior_to_json(const Prior& prior) {
  ordered_json j;
  std::visit(
      [&j](const auto& p) {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, NormalPrior>) {
          j["type"] = "normal";
          j["mean"] = p.mean;
          j["var"] = p.var;
        } else if constexpr (std::is_same_v<T, LaplacePrior>) {
          j["type"] = "laplace";
          j["rate"] = p.rate;
        } else if constexpr (std::is_same_v<T, ScaledInvChiSqPrior>) {
          j["type"] = "scaled_inv_chisq";
          j["nu0"] = p.nu0;
          j["s0sq"] = p.s0sq;
        } else if constexpr (std::is_same_v<T, FlatPrior>) {
          j["type"] = "flat";
        } else if constexpr (std::is_same_v<T, MixturePrior>) {
          j["type"] = "mixture";
          j["components"] = ordered_json::array();
          for (const auto& [w, comp] : p.components) {
            ordered_json c;
            c["weight"] = w;
            c["prior"] = prior_to_json(comp);
            j["components"].push_back(c);
          }
        } else if constexpr (std::is_same_v<T, TwoGroupPrior>) {
          j["type"] = "two_group";
          j["pi0"] = p.pi0;
          j["alt"] = prior_to_json(p.alt);
        } else {
          static_assert(std::is_same_v<T, PointMassPrior>);
          j["type"] = "point_mass";
          j["location"] = p.location;
        }
      },
      prior.node().v);
  return j;
}

} // namespace

ModelConfig parse_model_json(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: invalid JSON: ") + e.what());
  }
  ModelConfig config;
  if (j.contains("prior")) config.prior = prior_from_json(j["prior"]);
  if (j.contains("likelihood")) config.lik = likelihood_from_json(j["likelihood"]);
  if (j.contains("kind")) config.kind = kind_from_json(j["kind"]);
  if (j.contains("m")) config.m = j["m"].get<std::size_t>();
  if (j.contains("non_exchangeable")) {
    for (const auto& block : j["non_exchangeable"]) {
      const auto count = block.at("count").get<std::size_t>();
      config.non_exchangeable.emplace_back(count, prior_from_json(block.at("prior")));
    }
  }
  return config;
}

ModelConfig load_model_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open model file '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_model_json(buf.str());
}

Prior parse_prior_json(const std::string& json_text) {
  try {
    return prior_from_json(json::parse(json_text));
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: invalid prior JSON: ") + e.what());
  }
}

Prior parse_prior_spec(const std::string& spec) {
  if (spec.empty()) throw ConfigError("config: empty prior spec");
  if (spec.front() == '{') return parse_prior_json(spec);
  const auto colon = spec.find(':');
  const std::string head = spec.substr(0, colon);
  if (colon == std::string::npos) return builtin_prior(head);
  const std::string args = spec.substr(colon + 1);
  try {
    if (head == "laplace") return Prior::laplace(std::stod(args));
    if (head == "point") return Prior::point_mass(std::stod(args));
    if (head == "normal") {
      const auto comma = args.find(',');
      if (comma == std::string::npos)
        throw ConfigError("config: normal prior spec needs normal:<mean>,<var>");
      return Prior::normal(std::stod(args.substr(0, comma)),
                           std::stod(args.substr(comma + 1)));
    }
  } catch (const std::invalid_argument&) {
    throw ConfigError("config: malformed prior spec '" + spec + "'");
  }
  throw ConfigError("config: unknown prior spec '" + spec + "'");
}

SelectionRule parse_rule_spec(const std::string& spec) {
  const auto colon = spec.find(':');
  if (colon == std::string::npos)
    throw ConfigError("config: rule spec must look like twosided:<a>");
  const std::string head = spec.substr(0, colon);
  const std::string rest = spec.substr(colon + 1);
  try {
    if (head == "twosided") return SelectionRule::two_sided(std::stod(rest));
    if (head == "onesided") return SelectionRule::one_sided(std::stod(rest));
    if (head == "losscutoff") {
      const auto colon2 = rest.find(':');
      if (colon2 == std::string::npos)
        return SelectionRule::loss_threshold("directional", std::stod(rest));
      return SelectionRule::loss_threshold(rest.substr(0, colon2),
                                           std::stod(rest.substr(colon2 + 1)));
    }
  } catch (const std::invalid_argument&) {
    throw ConfigError("config: malformed rule spec '" + spec + "'");
  }
  throw ConfigError("config: unknown rule spec '" + spec + "'");
}

std::string canonical_model_json(const ModelConfig& config) {
  ordered_json j;
  j["prior"] = prior_to_json(config.prior);
  if (config.lik.is_normal_location()) {
    j["likelihood"] = {{"type", "normal_location"}, {"sigma", config.lik.sigma()}};
  } else {
    const auto& mv = config.lik.mean_and_variance_spec();
    j["likelihood"] = {{"type", "mean_and_variance"}, {"n", mv.n}, {"df", mv.df}};
  }
  switch (config.kind.tag()) {
    case EffectKind::Tag::Random:
      j["kind"] = "random";
      break;
    case EffectKind::Tag::Fixed:
      j["kind"] = "fixed";
      break;
    case EffectKind::Tag::Mixed:
      j["kind"] = {{"type", "mixed"},
                   {"description", config.kind.description()},
                   {"hyperprior", prior_to_json(config.kind.hyperprior())}};
      break;
  }
  if (config.m > 0) j["m"] = config.m;
  if (!config.non_exchangeable.empty()) {
    j["non_exchangeable"] = ordered_json::array();
    for (const auto& [count, prior] : config.non_exchangeable) {
      ordered_json block;
      block["count"] = count;
      block["prior"] = prior_to_json(prior);
      j["non_exchangeable"].push_back(block);
    }
  }
  return j.dump();
}

GenerativeSpec to_generative_spec(const ModelConfig& config) {
  GenerativeSpec spec;
  if (config.m == 0)
    throw ConfigError("config: simulation requires a positive 'm'");
  spec.m = config.m;
  spec.kind = config.kind;
  spec.prior = config.prior;
  spec.lik = config.lik;
  spec.non_exchangeable = config.non_exchangeable;
  return spec;
}

} // namespace sabayes
