// sabayes: batch CLI for selection-adjusted Bayesian inference.

#include <charconv>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "sabayes/config.hpp"
#include "sabayes/errors.hpp"
#include "sabayes/microarray.hpp"
#include "sabayes/multiplicity.hpp"
#include "sabayes/posterior.hpp"
#include "sabayes/risk.hpp"
#include "sabayes/sim.hpp"

using nlohmann::ordered_json;
using namespace sabayes;

namespace {

std::string fmt(double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

std::uint64_t default_seed() {
  if (const char* env = std::getenv("SABAYES_SEED")) {
    std::uint64_t s = 0;
    const auto res = std::from_chars(env, env + std::strlen(env), s);
    if (res.ec == std::errc()) return s;
  }
  return 20260808ULL;
}

void write_output(const std::string& path, const std::string& content) {
  if (path.empty() || path == "-") {
    std::cout << content;
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot open output file '" + path + "'");
  out << content;
}

ordered_json base_config(const std::string& command, std::uint64_t seed) {
  ordered_json j;
  j["command"] = command;
  j["seed"] = seed;
  return j;
}

std::string csv_header_comment(const ordered_json& config) {
  return "# config: " + config.dump() + "\n";
}

struct ModelFlags {
  std::string model_file;
  std::string prior_spec;
  std::string kind = "random";
  double sigma = 1.0;
};

ModelConfig resolve_model(const ModelFlags& flags) {
  ModelConfig config;
  if (!flags.model_file.empty()) {
    config = load_model_file(flags.model_file);
  } else {
    config.lik = Likelihood::normal_location(flags.sigma);
    if (!flags.prior_spec.empty()) config.prior = parse_prior_spec(flags.prior_spec);
  }
  if (flags.model_file.empty()) {
    if (flags.kind == "random")
      config.kind = EffectKind::random_effect();
    else if (flags.kind == "fixed")
      config.kind = EffectKind::fixed_effect();
    else
      throw ConfigError(
          "mixed effect kinds need a --model file with hyperprior/conditional");
  }
  return config;
}

ordered_json summary_json(const Summary& s) {
  ordered_json j;
  j["mean"] = s.mean;
  j["mode"] = s.mode;
  j["ci"] = {s.ci_lo, s.ci_hi};
  j["level"] = s.level;
  j["tail_prob_pos"] = s.tail_prob_pos;
  j["tail_prob_neg"] = s.tail_prob_neg;
  return j;
}

std::vector<double> read_pvalue_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open p-value file '" + path + "'");
  std::vector<double> pvalues;
  std::string line;
  bool first = true;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    char* end = nullptr;
    const double v = std::strtod(line.c_str(), &end);
    if (end != line.c_str() + line.size()) {
      if (first) {
        first = false;
        continue; // header row
      }
      throw ConfigError("p-value file: malformed line " + std::to_string(line_no));
    }
    first = false;
    pvalues.push_back(v);
  }
  return pvalues;
}

GenerativeSpec example1_spec(std::size_t m) {
  GenerativeSpec spec;
  spec.m = m;
  spec.kind = EffectKind::random_effect();
  spec.prior =
      Prior::mixture({{0.9, Prior::laplace(10.0)}, {0.1, Prior::laplace(1.0)}});
  spec.lik = Likelihood::normal_location(1.0);
  return spec;
}

EffectKind example1_mixed_kind() {
  return EffectKind::mixed(
      Prior::mixture({{0.9, Prior::point_mass(10.0)}, {0.1, Prior::point_mass(1.0)}}),
      [](double lambda) { return Prior::laplace(lambda); },
      "mixed:laplace(lambda)");
}

MicroRule parse_micro_rule(const std::string& spec) {
  const auto colon = spec.find(':');
  if (colon == std::string::npos)
    throw ConfigError("microarray rule must look like modt:<a> or rho:<s>");
  const std::string head = spec.substr(0, colon);
  const double cutoff = std::stod(spec.substr(colon + 1));
  if (head == "modt") return MicroRule::modt(cutoff);
  if (head == "rho") return MicroRule::rho(cutoff);
  throw ConfigError("unknown microarray rule '" + spec + "'");
}

// ---------------------------------------------------------------------------
// figure data
// ---------------------------------------------------------------------------

std::string figure1_csv(std::uint64_t seed) {
  GenerativeSpec spec = example1_spec(100000);
  RngStream rng(seed, 0);
  const Sample sample = generate(spec, rng);
  std::vector<double> pvalues(spec.m);
  for (std::size_t i = 0; i < spec.m; ++i)
    pvalues[i] = 2.0 * (1.0 - normal_cdf(std::fabs(sample.y[i])));
  const TestingResult bh = bh_procedure(pvalues, 0.2);

  std::vector<IndexedObs> selected;
  for (std::size_t i : bh.rejected) selected.push_back({i, sample.y[i], 1.0});
  const auto fcr = fcr_adjusted_cis(selected, 0.05, spec.m);
  const double z = normal_quantile(1.0 - 0.05 / 2.0);

  std::ostringstream out;
  out << "index,y,theta,ci95_lo,ci95_hi,fcr_lo,fcr_hi\n";
  for (std::size_t k = 0; k < selected.size(); ++k) {
    const auto& obs = selected[k];
    out << obs.index << ',' << fmt(obs.y) << ',' << fmt(sample.theta[obs.index])
        << ',' << fmt(obs.y - z) << ',' << fmt(obs.y + z) << ','
        << fmt(fcr[k].lo) << ',' << fmt(fcr[k].hi) << '\n';
  }
  return out.str();
}

std::string figure2_csv(std::uint64_t seed) {
  const SelectionRule rule = SelectionRule::two_sided(3.111);
  std::ostringstream out;
  out << "kind,theta,y\n";
  const char* names[3] = {"random", "mixed", "fixed"};
  for (int k = 0; k < 3; ++k) {
    GenerativeSpec spec = example1_spec(1);
    if (k == 0) spec.kind = EffectKind::random_effect();
    if (k == 1) spec.kind = example1_mixed_kind();
    if (k == 2) spec.kind = EffectKind::fixed_effect();
    RngStream rng(seed, static_cast<std::uint64_t>(k + 1));
    const auto draws = sample_truncated(spec, rule, 0, 1000, rng);
    for (const auto& [theta, y] : draws)
      out << names[k] << ',' << fmt(theta) << ',' << fmt(y) << '\n';
  }
  return out.str();
}

std::string figure3_csv() {
  const Prior mix =
      Prior::mixture({{0.9, Prior::laplace(10.0)}, {0.1, Prior::laplace(1.0)}});
  const Prior flat = Prior::flat();
  const Likelihood lik = Likelihood::normal_location(1.0);
  const SelectionRule rule = SelectionRule::two_sided(3.111);
  const SelectionRule whole = SelectionRule::whole_space();

  std::ostringstream out;
  out << "panel_y,theta,unadjusted,random_sab,flat_fixed_sab\n";
  for (double y : {3.40, 5.59}) {
    const PosteriorGrid unadj =
        sa_posterior(EffectKind::fixed_effect(), flat, lik, whole, y);
    const PosteriorGrid random_sab =
        sa_posterior(EffectKind::random_effect(), mix, lik, rule, y);
    const PosteriorGrid fixed_sab =
        sa_posterior(EffectKind::fixed_effect(), flat, lik, rule, y);
    for (double t = -8.0; t <= 12.0 + 1e-9; t += 0.01) {
      out << fmt(y) << ',' << fmt(t) << ',' << fmt(unadj.density_at(t)) << ','
          << fmt(random_sab.density_at(t)) << ',' << fmt(fixed_sab.density_at(t))
          << '\n';
    }
  }
  return out.str();
}

std::string figure4_csv(std::uint64_t seed) {
  GenerativeSpec spec = example1_spec(100000);
  RngStream rng(seed, 0);
  const Sample sample = generate(spec, rng);
  std::vector<double> pvalues(spec.m);
  for (std::size_t i = 0; i < spec.m; ++i)
    pvalues[i] = 2.0 * (1.0 - normal_cdf(std::fabs(sample.y[i])));
  const TestingResult bh = bh_procedure(pvalues, 0.2);
  std::vector<IndexedObs> selected;
  for (std::size_t i : bh.rejected)
    if (sample.y[i] > 0.0) selected.push_back({i, sample.y[i], 1.0});
  const auto fcr = fcr_adjusted_cis(selected, 0.05, spec.m);
  const double z = normal_quantile(1.0 - 0.05 / 2.0);

  double cutoff = std::numeric_limits<double>::infinity();
  for (std::size_t i : bh.rejected)
    cutoff = std::min(cutoff, std::fabs(sample.y[i]));
  const SelectionRule rule = SelectionRule::two_sided(cutoff * (1.0 - 1e-9));
  const Likelihood lik = Likelihood::normal_location(1.0);
  const Prior flat = Prior::flat();

  std::ostringstream out;
  out << "y,theta,unadj_lo,unadj_hi,fcr_lo,fcr_hi,sab_fixed_lo,sab_fixed_hi,"
         "sab_random_lo,sab_random_hi\n";
  for (std::size_t k = 0; k < selected.size(); ++k) {
    const auto& obs = selected[k];
    const Summary fs = summarize(
        sa_posterior(EffectKind::fixed_effect(), flat, lik, rule, obs.y), 0.95);
    const Summary rs = summarize(
        sa_posterior(EffectKind::random_effect(), spec.prior, lik, rule, obs.y),
        0.95);
    out << fmt(obs.y) << ',' << fmt(sample.theta[obs.index]) << ','
        << fmt(obs.y - z) << ',' << fmt(obs.y + z) << ',' << fmt(fcr[k].lo)
        << ',' << fmt(fcr[k].hi) << ',' << fmt(fs.ci_lo) << ',' << fmt(fs.ci_hi)
        << ',' << fmt(rs.ci_lo) << ',' << fmt(rs.ci_hi) << '\n';
  }
  return out.str();
}

std::string figure5_csv(const std::string& data_path) {
  const EBayesFit fit{4.02, 0.052, 8.5};
  MicroModel model(fit);
  std::ostringstream out;
  out << "curve,ybar,s\n";
  auto emit_modt = [&](const char* name, double a) {
    for (double s = 0.01; s <= 1.2 + 1e-9; s += 0.005) {
      const double s2 = s * s;
      const double ybar = a * std::sqrt(model.moderated_s2(s2)) / 2.0;
      out << name << ',' << fmt(ybar) << ',' << fmt(s) << '\n';
    }
  };
  // the loss dips with |ybar| and can rise again where extreme means are
  // better explained as noise, so emit every boundary crossing
  auto emit_rho = [&](const char* name, double cutoff) {
    for (double s = 0.01; s <= 1.2 + 1e-9; s += 0.005) {
      const double s2 = s * s;
      double prev_y = 0.0;
      double prev_r = model.rho(0.0, s2) - cutoff;
      for (double ybar = 0.02; ybar <= 5.4 + 1e-9; ybar += 0.02) {
        const double r = model.rho(ybar, s2) - cutoff;
        if ((prev_r > 0.0) != (r > 0.0)) {
          const double cross = find_root(
              [&](double y) { return model.rho(y, s2) - cutoff; }, prev_y, ybar,
              1e-5);
          out << name << ',' << fmt(cross) << ',' << fmt(s) << '\n';
        }
        prev_y = ybar;
        prev_r = r;
      }
    }
  };
  emit_modt("modt_4.479", 4.479);
  emit_modt("modt_2.64", 2.64);
  emit_rho("rho_0.05", 0.05);
  emit_rho("rho_0.088", 0.088);
  if (!data_path.empty()) {
    const IngestReport report = ingest(data_path);
    for (const auto& r : report.records)
      out << "data," << fmt(r.ybar) << ',' << fmt(std::sqrt(r.s2)) << '\n';
  }
  return out.str();
}

std::string figure6_csv(double ybar, double s2) {
  const EBayesFit fit{4.02, 0.052, 8.5};
  GeneRecord rec{"gene", ybar, s2, 4, 3};
  MicroModel model(fit);
  const PosteriorGrid unadj =
      model.gene_posterior(rec, std::nullopt, GeneEffectPrior::Flat);
  const PosteriorGrid ebayes =
      model.gene_posterior(rec, std::nullopt, GeneEffectPrior::Laplace);
  const PosteriorGrid sab1 =
      model.gene_posterior(rec, MicroRule::modt(4.479), GeneEffectPrior::Flat);
  const PosteriorGrid sab2 =
      model.gene_posterior(rec, MicroRule::modt(2.64), GeneEffectPrior::Flat);
  std::ostringstream out;
  out << "mu,unadjusted,ebayes,sab_modt4479,sab_modt264\n";
  for (double mu = ybar - 0.7; mu <= ybar + 0.9 + 1e-9; mu += 0.002) {
    out << fmt(mu) << ',' << fmt(unadj.density_at(mu)) << ','
        << fmt(ebayes.density_at(mu)) << ',' << fmt(sab1.density_at(mu)) << ','
        << fmt(sab2.density_at(mu)) << '\n';
  }
  return out.str();
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"sabayes: selection-adjusted Bayesian inference toolkit"};
  app.require_subcommand(1);

  std::uint64_t seed = default_seed();
  app.add_option("--seed", seed, "rng seed (default: SABAYES_SEED or 20260808)");
  unsigned workers = 1;
  app.add_option("--workers", workers, "worker threads for replication loops");

  // ---- posterior ----
  auto* post_cmd = app.add_subcommand("posterior", "selection-adjusted posterior");
  ModelFlags post_model;
  std::string post_rule = "twosided:0";
  double post_y = 0.0, post_level = 0.95;
  bool compound = false;
  double gamma2 = 1.0, y1 = 0.0, y2 = 2.0, comp_var = 4.0;
  std::string post_out;
  post_cmd->add_option("--kind", post_model.kind, "random|fixed (mixed via --model)");
  post_cmd->add_option("--prior", post_model.prior_spec, "prior spec, e.g. flat");
  post_cmd->add_option("--model", post_model.model_file, "model JSON file");
  post_cmd->add_option("--rule", post_rule, "selection rule, e.g. twosided:3.111");
  post_cmd->add_option("--y", post_y, "observation");
  post_cmd->add_option("--level", post_level, "credible level");
  post_cmd->add_option("--sigma", post_model.sigma, "observation noise scale");
  post_cmd->add_flag("--compound", compound, "two-compound largest-mean mode");
  post_cmd->add_option("--gamma2", gamma2, "compound-effect variance share");
  post_cmd->add_option("--y1", y1, "first compound observation");
  post_cmd->add_option("--y2", y2, "second (selected) compound observation");
  post_cmd->add_option("--var", comp_var, "compound sampling variance");
  post_cmd->add_option("-o,--output", post_out, "output path (default stdout)");

  // ---- freq-ci ----
  auto* freq_cmd = app.add_subcommand("freq-ci", "frequentist selective CI");
  std::string freq_rule = "twosided:3.111";
  double freq_y = 3.40, freq_alpha = 0.05, freq_sigma = 1.0;
  std::string freq_out;
  freq_cmd->add_option("--rule", freq_rule, "selection rule");
  freq_cmd->add_option("--y", freq_y, "observation");
  freq_cmd->add_option("--alpha", freq_alpha, "test level");
  freq_cmd->add_option("--sigma", freq_sigma, "observation noise scale");
  freq_cmd->add_option("-o,--output", freq_out, "output path");

  // ---- risk ----
  auto* risk_cmd = app.add_subcommand("risk", "saBayes risk of a rule");
  ModelFlags risk_model;
  std::string risk_rule = "twosided:3.111", risk_loss = "directional";
  double risk_m = 1.0;
  std::string risk_out;
  risk_cmd->add_option("--model", risk_model.model_file, "model JSON file");
  risk_cmd->add_option("--prior", risk_model.prior_spec, "prior spec");
  risk_cmd->add_option("--sigma", risk_model.sigma, "observation noise scale");
  risk_cmd->add_option("--rule", risk_rule, "selection rule");
  risk_cmd->add_option("--loss", risk_loss, "loss name");
  risk_cmd->add_option("--m", risk_m, "family size for expected discoveries");
  risk_cmd->add_option("-o,--output", risk_out, "output path");

  // ---- calibrate ----
  auto* cal_cmd = app.add_subcommand("calibrate", "FDR-controlling rule calibration");
  ModelFlags cal_model;
  std::string cal_family = "twosided", cal_loss = "directional";
  double cal_q = 0.10;
  std::string cal_out;
  cal_cmd->add_option("--model", cal_model.model_file, "model JSON file");
  cal_cmd->add_option("--prior", cal_model.prior_spec, "prior spec");
  cal_cmd->add_option("--sigma", cal_model.sigma, "observation noise scale");
  cal_cmd->add_option("--family", cal_family, "twosided|onesided|losscutoff");
  cal_cmd->add_option("--loss", cal_loss, "loss name");
  cal_cmd->add_option("--q", cal_q, "target risk level");
  cal_cmd->add_option("-o,--output", cal_out, "output path");

  // ---- bh ----
  auto* bh_cmd = app.add_subcommand("bh", "Benjamini-Hochberg step-up");
  std::string bh_file, bh_out;
  double bh_q = 0.1;
  bh_cmd->add_option("--q", bh_q, "nominal FDR level");
  bh_cmd->add_option("--pvalues", bh_file, "one-column p-value CSV")->required();
  bh_cmd->add_option("-o,--output", bh_out, "output path");

  // ---- fcr ----
  auto* fcr_cmd = app.add_subcommand("fcr", "FCR-adjusted confidence intervals");
  std::string fcr_file, fcr_out, fcr_format = "json";
  double fcr_q = 0.05;
  std::size_t fcr_m = 0;
  fcr_cmd->add_option("--q", fcr_q, "FCR level");
  fcr_cmd->add_option("--selected", fcr_file, "CSV with index,y,sigma")->required();
  fcr_cmd->add_option("--m", fcr_m, "family size")->required();
  fcr_cmd->add_option("--format", fcr_format, "json|csv");
  fcr_cmd->add_option("-o,--output", fcr_out, "output path");

  // ---- simulate ----
  auto* sim_cmd = app.add_subcommand("simulate", "draw from a generative model");
  std::string sim_model_file, sim_out, sim_rule;
  std::size_t sim_m = 0, sim_n = 1000, sim_target = 0;
  bool sim_truncated = false;
  sim_cmd->add_option("--model", sim_model_file, "model JSON file")->required();
  sim_cmd->add_option("--m", sim_m, "override component count");
  sim_cmd->add_flag("--truncated", sim_truncated, "truncated sampling mode");
  sim_cmd->add_option("--rule", sim_rule, "selection rule for --truncated");
  sim_cmd->add_option("--n", sim_n, "realizations for --truncated");
  sim_cmd->add_option("--target", sim_target, "target index for --truncated");
  sim_cmd->add_option("-o,--output", sim_out, "output path");

  // ---- replicate ----
  auto* rep_cmd = app.add_subcommand("replicate", "replication statistics");
  std::string rep_model_file, rep_rule, rep_out;
  std::size_t rep_n = 50;
  double rep_bh_q = -1.0;
  rep_cmd->add_option("--model", rep_model_file, "model JSON file")->required();
  rep_cmd->add_option("--reps", rep_n, "replication count");
  rep_cmd->add_option("--rule", rep_rule, "fixed selection rule");
  rep_cmd->add_option("--bh-q", rep_bh_q, "BH level per replication");
  rep_cmd->add_option("-o,--output", rep_out, "per-replication CSV path");

  // ---- microarray ----
  auto* micro_cmd = app.add_subcommand("microarray", "gene-level saBayes analysis");
  std::string micro_data, micro_gene, micro_rule_spec, micro_effect = "flat";
  std::string micro_calibrate_family, micro_counts, micro_out;
  double micro_nu0 = 4.02, micro_s0sq = 0.052, micro_rate = 8.5, micro_q = 0.05;
  double micro_bh_q = 0.0;
  bool micro_fit = false, micro_risk = false, micro_posterior = false;
  bool micro_raw_t = false;
  micro_cmd->add_option("--data", micro_data, "gene summary CSV (id,ybar,s2[,n,df])");
  micro_cmd->add_flag("--fit", micro_fit, "fit variance prior instead of override");
  micro_cmd->add_option("--nu0", micro_nu0, "variance prior degrees of freedom");
  micro_cmd->add_option("--s0sq", micro_s0sq, "variance prior scale");
  micro_cmd->add_option("--rate", micro_rate, "effect prior Laplace rate");
  micro_cmd->add_option("--gene", micro_gene, "gene id for posterior output");
  micro_cmd->add_option("--rule", micro_rule_spec, "modt:<a> or rho:<s>");
  micro_cmd->add_option("--effect-prior", micro_effect, "flat|laplace");
  micro_cmd->add_flag("--posterior", micro_posterior, "emit gene posterior summary");
  micro_cmd->add_flag("--risk", micro_risk, "emit rule risk report");
  micro_cmd->add_option("--calibrate", micro_calibrate_family,
                        "calibrate family: modt|rho");
  micro_cmd->add_option("--q", micro_q, "target risk for --calibrate");
  micro_cmd->add_option("--counts", micro_counts,
                        "comma-separated rules to count discoveries for");
  micro_cmd->add_option("--bh-q", micro_bh_q, "run BH on moderated-t p-values");
  micro_cmd->add_flag("--raw-t", micro_raw_t, "BH on raw t p-values instead");
  micro_cmd->add_option("-o,--output", micro_out, "output path");

  // ---- figure ----
  auto* fig_cmd = app.add_subcommand("figure", "regenerate figure data as CSV");
  int fig_n = 0;
  std::string fig_out_dir = ".", fig_data;
  double fig_ybar = -0.435, fig_s2 = 0.0173;
  fig_cmd->add_option("n", fig_n, "figure number 1..6")->required();
  fig_cmd->add_option("--out-dir", fig_out_dir, "output directory");
  fig_cmd->add_option("--data", fig_data, "gene summary CSV for figure 5");
  fig_cmd->add_option("--ybar", fig_ybar, "gene mean for figure 6");
  fig_cmd->add_option("--s2", fig_s2, "gene sample variance for figure 6");

  // let the global --seed/--workers options appear after the subcommand name
  for (CLI::App* sub : app.get_subcommands([](const CLI::App*) { return true; }))
    sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << app.help() << "\nerror: " << e.what() << "\n";
    return 2;
  }

  try {
    if (post_cmd->parsed()) {
      ordered_json config = base_config("posterior", seed);
      ordered_json out;
      if (compound) {
        config["gamma2"] = gamma2;
        config["y"] = {y1, y2};
        config["sampling_var"] = comp_var;
        config["kind"] = post_model.kind;
        EffectKind kind = post_model.kind == "fixed"
                              ? EffectKind::fixed_effect()
                              : (post_model.kind == "mixed"
                                     ? EffectKind::mixed(
                                           Prior::normal(0.0, std::max(1e-12, 1.0 - gamma2)),
                                           [gamma2](double l) {
                                             return Prior::normal(l, gamma2);
                                           },
                                           "mixed:normal(lambda)")
                                     : EffectKind::random_effect());
        const Summary s =
            compound_selection_posterior(gamma2, {y1, y2}, comp_var, kind);
        out["config"] = config;
        out["summary"] = summary_json(s);
      } else {
        const ModelConfig model = resolve_model(post_model);
        const SelectionRule rule = parse_rule_spec(post_rule);
        config["model"] = ordered_json::parse(canonical_model_json(model));
        config["rule"] = rule.to_string();
        config["y"] = post_y;
        config["level"] = post_level;
        const PosteriorGrid post =
            sa_posterior(model.kind, model.prior, model.lik, rule, post_y);
        const Summary s = summarize(post, post_level);
        out["config"] = config;
        out["summary"] = summary_json(s);
        out["normalization"] = post.normalization();
        ordered_json atoms = ordered_json::array();
        for (const auto& a : post.atoms())
          atoms.push_back({{"location", a.location}, {"mass", a.mass}});
        out["atoms"] = atoms;
      }
      write_output(post_out, out.dump(2) + "\n");
    } else if (freq_cmd->parsed()) {
      ordered_json config = base_config("freq-ci", seed);
      const SelectionRule rule = parse_rule_spec(freq_rule);
      config["rule"] = rule.to_string();
      config["y"] = freq_y;
      config["alpha"] = freq_alpha;
      const FreqCi ci =
          freq_selective_ci(Likelihood::normal_location(freq_sigma), rule,
                            freq_y, freq_alpha);
      ordered_json out;
      out["config"] = config;
      out["intervals"] = ordered_json::array();
      for (const auto& iv : ci.intervals) out["intervals"].push_back({iv.lo, iv.hi});
      out["warning"] = ci.warning;
      write_output(freq_out, out.dump(2) + "\n");
    } else if (risk_cmd->parsed()) {
      ordered_json config = base_config("risk", seed);
      const ModelConfig model = resolve_model(risk_model);
      const SelectionRule rule = parse_rule_spec(risk_rule);
      const Loss loss = Loss::from_name(risk_loss);
      config["model"] = ordered_json::parse(canonical_model_json(model));
      config["rule"] = rule.to_string();
      config["loss"] = loss.name();
      const RiskReport report =
          sabayes_risk(model.prior, model.lik, rule, loss, risk_m);
      ordered_json out;
      out["config"] = config;
      out["report"] = ordered_json::parse(report.to_json());
      out["ev_over_er"] = report.ev_over_er;
      write_output(risk_out, out.dump(2) + "\n");
    } else if (cal_cmd->parsed()) {
      ordered_json config = base_config("calibrate", seed);
      const ModelConfig model = resolve_model(cal_model);
      const Loss loss = Loss::from_name(cal_loss);
      RuleFamily family;
      if (cal_family == "twosided")
        family = RuleFamily::TwoSided;
      else if (cal_family == "onesided")
        family = RuleFamily::OneSided;
      else if (cal_family == "losscutoff")
        family = RuleFamily::LossThreshold;
      else
        throw ConfigError("unknown family '" + cal_family + "'");
      config["model"] = ordered_json::parse(canonical_model_json(model));
      config["family"] = cal_family;
      config["loss"] = loss.name();
      config["q"] = cal_q;
      const CalibrationResult result =
          calibrate_rule(family, model.prior, model.lik, loss, cal_q);
      ordered_json out;
      out["config"] = config;
      out["rule"] = result.rule.to_string();
      out["cutoff"] = result.rule.cutoff();
      out["achieved_risk"] = result.achieved_risk;
      write_output(cal_out, out.dump(2) + "\n");
    } else if (bh_cmd->parsed()) {
      ordered_json config = base_config("bh", seed);
      config["q"] = bh_q;
      config["pvalues"] = bh_file;
      const auto pvalues = read_pvalue_csv(bh_file);
      const TestingResult result = bh_procedure(pvalues, bh_q);
      ordered_json out;
      out["config"] = config;
      out["result"] = ordered_json::parse(result.to_json());
      write_output(bh_out, out.dump(2) + "\n");
    } else if (fcr_cmd->parsed()) {
      ordered_json config = base_config("fcr", seed);
      config["q"] = fcr_q;
      config["m"] = fcr_m;
      std::ifstream in(fcr_file);
      if (!in) throw ConfigError("cannot open '" + fcr_file + "'");
      std::vector<IndexedObs> selected;
      std::string line;
      bool first = true;
      while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::istringstream row(line);
        std::string a, b, c;
        std::getline(row, a, ',');
        std::getline(row, b, ',');
        std::getline(row, c, ',');
        try {
          selected.push_back({static_cast<std::size_t>(std::stoull(a)),
                              std::stod(b), std::stod(c)});
        } catch (const std::exception&) {
          if (first) {
            first = false;
            continue;
          }
          throw ConfigError("fcr: malformed row '" + line + "'");
        }
        first = false;
      }
      const auto intervals = fcr_adjusted_cis(selected, fcr_q, fcr_m);
      if (fcr_format == "csv") {
        std::ostringstream out;
        out << csv_header_comment(config) << "index,y,lo,hi\n";
        for (std::size_t i = 0; i < selected.size(); ++i)
          out << selected[i].index << ',' << fmt(selected[i].y) << ','
              << fmt(intervals[i].lo) << ',' << fmt(intervals[i].hi) << '\n';
        write_output(fcr_out, out.str());
      } else {
        ordered_json out;
        out["config"] = config;
        out["intervals"] = ordered_json::array();
        for (std::size_t i = 0; i < selected.size(); ++i)
          out["intervals"].push_back({{"index", selected[i].index},
                                      {"lo", intervals[i].lo},
                                      {"hi", intervals[i].hi}});
        write_output(fcr_out, out.dump(2) + "\n");
      }
    } else if (sim_cmd->parsed()) {
      ordered_json config = base_config("simulate", seed);
      ModelConfig model = load_model_file(sim_model_file);
      if (sim_m > 0) model.m = sim_m;
      GenerativeSpec spec = to_generative_spec(model);
      config["model"] = ordered_json::parse(canonical_model_json(model));
      RngStream rng(seed, 0);
      std::ostringstream out;
      if (sim_truncated) {
        if (sim_rule.empty())
          throw ConfigError("simulate --truncated needs --rule");
        const SelectionRule rule = parse_rule_spec(sim_rule);
        config["rule"] = rule.to_string();
        config["n"] = sim_n;
        const auto draws = sample_truncated(spec, rule, sim_target, sim_n, rng);
        out << csv_header_comment(config) << "theta,y\n";
        for (const auto& [theta, y] : draws)
          out << fmt(theta) << ',' << fmt(y) << '\n';
      } else {
        const Sample sample = generate(spec, rng);
        out << csv_header_comment(config) << "i,theta,y\n";
        for (std::size_t i = 0; i < spec.m; ++i)
          out << i << ',' << fmt(sample.theta[i]) << ',' << fmt(sample.y[i])
              << '\n';
      }
      write_output(sim_out, out.str());
    } else if (rep_cmd->parsed()) {
      ordered_json config = base_config("replicate", seed);
      const ModelConfig model = load_model_file(rep_model_file);
      const GenerativeSpec spec = to_generative_spec(model);
      config["model"] = ordered_json::parse(canonical_model_json(model));
      config["reps"] = rep_n;
      RulePolicy policy = RulePolicy::bh(0.2);
      if (rep_bh_q > 0.0) {
        policy = RulePolicy::bh(rep_bh_q);
        config["bh_q"] = rep_bh_q;
      } else if (!rep_rule.empty()) {
        policy = RulePolicy::fixed(parse_rule_spec(rep_rule));
        config["rule"] = policy.rule.to_string();
      } else {
        throw ConfigError("replicate needs --rule or --bh-q");
      }
      const RngStream rng(seed, 0);
      const auto rows = replicate_rows(spec, policy, rep_n, rng, workers);
      if (!rep_out.empty()) {
        std::ostringstream csv;
        csv << csv_header_comment(config) << "rep,R,V,FDP\n";
        for (const auto& row : rows)
          csv << row.rep << ',' << row.R << ',' << row.V << ',' << fmt(row.fdp)
              << '\n';
        write_output(rep_out, csv.str());
      }
      const ReplicationStats stats = replicate(spec, policy, rep_n, rng, workers);
      ordered_json out;
      out["config"] = config;
      out["n_reps"] = stats.n_reps;
      out["mean_R"] = stats.mean_R;
      out["mean_V"] = stats.mean_V;
      out["mean_FDP"] = stats.mean_FDP;
      out["se_R"] = stats.se_R;
      out["se_V"] = stats.se_V;
      out["se_FDP"] = stats.se_FDP;
      write_output("", out.dump(2) + "\n");
    } else if (micro_cmd->parsed()) {
      ordered_json config = base_config("microarray", seed);
      IngestReport data;
      if (!micro_data.empty()) data = ingest(micro_data);
      EBayesFit fit{micro_nu0, micro_s0sq, micro_rate};
      if (micro_fit) {
        fit = fit_variance_prior(data.records, std::nullopt, micro_rate);
      }
      config["nu0"] = fit.nu0;
      config["s0sq"] = fit.s0sq;
      config["laplace_rate"] = fit.laplace_rate;
      ordered_json out;
      out["config"] = config;
      if (!micro_data.empty()) {
        out["records"] = data.records.size();
        out["rejected_rows"] = data.rejected.size();
      }
      MicroModel model(fit);

      std::optional<MicroRule> rule;
      if (!micro_rule_spec.empty()) {
        rule = parse_micro_rule(micro_rule_spec);
        config["rule"] = micro_rule_spec;
      }
      if (micro_posterior) {
        if (micro_gene.empty())
          throw ConfigError("--posterior needs --gene");
        const GeneRecord* rec = nullptr;
        for (const auto& r : data.records)
          if (r.id == micro_gene) rec = &r;
        if (!rec) throw ConfigError("gene '" + micro_gene + "' not found");
        const GeneEffectPrior prior = micro_effect == "laplace"
                                          ? GeneEffectPrior::Laplace
                                          : GeneEffectPrior::Flat;
        const PosteriorGrid post = model.gene_posterior(*rec, rule, prior);
        ordered_json gene;
        gene["id"] = rec->id;
        gene["t_moderated"] = model.moderated_t(rec->ybar, rec->s2);
        gene["p_moderated"] = moderated_p(*rec, fit);
        if (rule) {
          const bool selected =
              rule->kind == MicroRule::Kind::ModT
                  ? std::fabs(model.moderated_t(rec->ybar, rec->s2)) > rule->cutoff
                  : model.rho(rec->ybar, rec->s2) <= rule->cutoff;
          gene["selected"] = selected;
        }
        gene["summary"] = summary_json(summarize(post, 0.95));
        out["gene"] = gene;
      }
      if (micro_risk) {
        if (!rule) throw ConfigError("--risk needs --rule");
        const RiskReport report = model.risk(
            *rule, data.records.empty() ? 1.0
                                        : static_cast<double>(data.records.size()));
        out["report"] = ordered_json::parse(report.to_json());
      }
      if (!micro_calibrate_family.empty()) {
        const double cutoff = micro_calibrate_family == "modt"
                                  ? model.calibrate_modt(micro_q)
                                  : model.calibrate_rho(micro_q);
        out["calibrated"] = {{"family", micro_calibrate_family},
                             {"q", micro_q},
                             {"cutoff", cutoff}};
      }
      if (!micro_counts.empty()) {
        ordered_json counts = ordered_json::array();
        std::istringstream specs(micro_counts);
        std::string one;
        while (std::getline(specs, one, ',')) {
          const MicroRule r = parse_micro_rule(one);
          counts.push_back(
              {{"rule", one},
               {"count", count_discoveries(data.records, r, fit, workers)}});
        }
        out["counts"] = counts;
      }
      if (micro_bh_q > 0.0) {
        const TestingResult bh = micro_raw_t
                                     ? bh_on_raw_t(data.records, micro_bh_q)
                                     : bh_on_moderated(data.records, fit, micro_bh_q);
        ordered_json b;
        b["q"] = micro_bh_q;
        b["r"] = bh.r;
        b["threshold_p"] = bh.threshold_p;
        if (bh.r > 0) {
          double min_abs_t = std::numeric_limits<double>::infinity();
          for (std::size_t i : bh.rejected) {
            const double t = micro_raw_t
                                 ? data.records[i].ybar /
                                       (std::sqrt(data.records[i].s2) / 2.0)
                                 : moderated_t(data.records[i], fit);
            min_abs_t = std::min(min_abs_t, std::fabs(t));
          }
          b["threshold_t"] = min_abs_t;
        }
        out["bh"] = b;
      }
      write_output(micro_out, out.dump(2) + "\n");
    } else if (fig_cmd->parsed()) {
      std::string csv;
      switch (fig_n) {
        case 1: csv = figure1_csv(seed); break;
        case 2: csv = figure2_csv(seed); break;
        case 3: csv = figure3_csv(); break;
        case 4: csv = figure4_csv(seed); break;
        case 5: csv = figure5_csv(fig_data); break;
        case 6: csv = figure6_csv(fig_ybar, fig_s2); break;
        default:
          throw ConfigError("figure number must be 1..6");
      }
      ordered_json config = base_config("figure", seed);
      config["n"] = fig_n;
      const std::string path =
          fig_out_dir + "/figure" + std::to_string(fig_n) + ".csv";
      write_output(path, csv_header_comment(config) + csv);
      std::cout << path << "\n";
    }
  } catch (const Error& e) {
    ordered_json diag;
    diag["error"] = e.what();
    std::cerr << diag.dump(2) << "\n";
    return 1;
  } catch (const std::exception& e) {
    ordered_json diag;
    diag["error"] = e.what();
    std::cerr << diag.dump(2) << "\n";
    return 1;
  }
  return 0;
}
