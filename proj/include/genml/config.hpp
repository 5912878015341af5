#pragma once

// JSON run configuration for the command-line tool.

#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "genml/dataset.hpp"
#include "genml/error.hpp"
#include "genml/inference.hpp"
#include "genml/learner.hpp"
#include "genml/synth.hpp"

namespace genml::config {

using json = nlohmann::ordered_json;

enum class ClanMode { automatic, on, off };

struct AnalysisConfig {
  std::string data;  // as written; resolved against base_dir
  std::map<std::string, std::string> columns;
  std::vector<std::string> aggregate_covariates;
  std::vector<std::string> outcomes;  // empty: every outcome-role column
  std::vector<std::string> learners{"en", "rf"};
  int splits = 50;
  double alpha = 0.05;
  std::uint64_t seed = 20240101;
  std::string variance = "robust";  // robust | cluster
  std::string propensity = "global";
  std::string fixed_effects = "auto";
  std::string reference = "normal";
  ClanMode clan = ClanMode::automatic;
  int clan_covariates = 5;
  double clan_detection_level = 0.10;
  std::optional<std::string> output_dir;
  int parallelism = 0;
  double max_failure_share = 0.2;
  ElasticNetConfig elastic_net;
  ForestParams random_forest;

  std::filesystem::path base_dir;  // directory of the config file; not serialized
};

namespace detail {

inline void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be a JSON object");
  for (const auto& [k, v] : j.items())
    if (!allowed.count(k)) throw ConfigError("unknown key '" + k + "' in " + where);
}

template <class T>
T get(const json& j, const std::string& key, const std::string& where) {
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(where + ": key '" + key + "' is missing or has the wrong type");
  }
}

template <class T>
void maybe(const json& j, const std::string& key, T& out, const std::string& where) {
  if (j.contains(key)) out = get<T>(j, key, where);
}

inline std::string clan_name(ClanMode m) {
  switch (m) {
    case ClanMode::on:
      return "on";
    case ClanMode::off:
      return "off";
    case ClanMode::automatic:
      break;
  }
  return "auto";
}

}  // namespace detail

inline ClanMode parse_clan_mode(const std::string& s) {
  if (s == "auto") return ClanMode::automatic;
  if (s == "on") return ClanMode::on;
  if (s == "off") return ClanMode::off;
  throw ConfigError("clan must be auto, on or off (got '" + s + "')");
}

inline void check(const AnalysisConfig& c) {
  if (c.data.empty()) throw ConfigError("config: 'data' is required");
  if (c.columns.empty()) throw ConfigError("config: 'columns' is required");
  for (const auto& [col, role] : c.columns) (void)parse_role(role);
  if (c.learners.empty()) throw ConfigError("config: at least one learner is required");
  std::set<std::string> seen;
  for (const auto& l : c.learners) {
    if (l != "en" && l != "rf") throw ConfigError("config: unknown learner '" + l + "' (expected en or rf)");
    if (!seen.insert(l).second) throw ConfigError("config: learner '" + l + "' listed twice");
  }
  if (c.splits < 1) throw ConfigError("config: splits must be at least 1");
  if (!(c.alpha > 0.0 && c.alpha <= 0.25)) throw ConfigError("config: alpha must lie in (0, 0.25]");
  if (c.variance != "robust" && c.variance != "cluster") throw ConfigError("config: variance must be robust or cluster");
  if (c.propensity != "global" && c.propensity != "per_stratum")
    throw ConfigError("config: propensity must be global or per_stratum");
  if (c.fixed_effects != "auto" && c.fixed_effects != "dummies" && c.fixed_effects != "absorb")
    throw ConfigError("config: fixed_effects must be auto, dummies or absorb");
  if (c.reference != "normal" && c.reference != "t") throw ConfigError("config: reference must be normal or t");
  if (c.clan_covariates < 1) throw ConfigError("config: clan_covariates must be positive");
  if (c.parallelism < 0) throw ConfigError("config: parallelism must be non-negative");
  if (!(c.max_failure_share >= 0.0 && c.max_failure_share < 1.0))
    throw ConfigError("config: max_failure_share must lie in [0, 1)");
  bool has_cluster = false;
  for (const auto& [col, role] : c.columns) has_cluster |= role == "cluster";
  if (c.variance == "cluster" && !has_cluster)
    throw ConfigError("config: cluster variance requires a column with role 'cluster'");
  for (const auto& o : c.outcomes) {
    auto it = c.columns.find(o);
    if (it == c.columns.end() || it->second != "outcome")
      throw ConfigError("config: outcome '" + o + "' is not a column with role 'outcome'");
  }
  for (const auto& a : c.aggregate_covariates) {
    auto it = c.columns.find(a);
    if (it == c.columns.end() || it->second != "covariate")
      throw ConfigError("config: aggregate covariate '" + a + "' is not a column with role 'covariate'");
  }
  const auto& t = c.elastic_net.tuning;
  if (t.folds < 2 || t.repeats < 1 || t.candidates < 1) throw ConfigError("config: invalid elastic_net tuning plan");
  if (!(t.lambda1_min > 0.0 && t.lambda1_min <= t.lambda1_max && t.lambda2_min > 0.0 && t.lambda2_min <= t.lambda2_max))
    throw ConfigError("config: invalid elastic_net lambda range");
  if (c.random_forest.trees < 1 || c.random_forest.tree.min_leaf < 1)
    throw ConfigError("config: random_forest needs trees >= 1 and min_leaf >= 1");
}

inline AnalysisConfig from_json(const json& j, std::filesystem::path base_dir = {}) {
  const std::string where = "config";
  detail::check_keys(j, {"data", "columns", "aggregate_covariates", "outcomes", "learners", "splits", "alpha", "seed",
                         "variance", "propensity", "fixed_effects", "reference", "clan", "clan_covariates",
                         "clan_detection_level", "output_dir", "parallelism", "max_failure_share", "elastic_net",
                         "random_forest"},
                     where);
  AnalysisConfig c;
  c.base_dir = std::move(base_dir);
  c.data = detail::get<std::string>(j, "data", where);
  c.columns = detail::get<std::map<std::string, std::string>>(j, "columns", where);
  detail::maybe(j, "aggregate_covariates", c.aggregate_covariates, where);
  detail::maybe(j, "outcomes", c.outcomes, where);
  detail::maybe(j, "learners", c.learners, where);
  detail::maybe(j, "splits", c.splits, where);
  detail::maybe(j, "alpha", c.alpha, where);
  detail::maybe(j, "seed", c.seed, where);
  detail::maybe(j, "variance", c.variance, where);
  detail::maybe(j, "propensity", c.propensity, where);
  detail::maybe(j, "fixed_effects", c.fixed_effects, where);
  detail::maybe(j, "reference", c.reference, where);
  if (j.contains("clan")) c.clan = parse_clan_mode(detail::get<std::string>(j, "clan", where));
  detail::maybe(j, "clan_covariates", c.clan_covariates, where);
  detail::maybe(j, "clan_detection_level", c.clan_detection_level, where);
  if (j.contains("output_dir")) c.output_dir = detail::get<std::string>(j, "output_dir", where);
  detail::maybe(j, "parallelism", c.parallelism, where);
  detail::maybe(j, "max_failure_share", c.max_failure_share, where);
  if (j.contains("elastic_net")) {
    const json& e = j.at("elastic_net");
    const std::string w = "elastic_net";
    detail::check_keys(e, {"folds", "repeats", "candidates", "lambda_min", "lambda_max", "debias", "tolerance", "max_sweeps"}, w);
    auto& t = c.elastic_net.tuning;
    detail::maybe(e, "folds", t.folds, w);
    detail::maybe(e, "repeats", t.repeats, w);
    detail::maybe(e, "candidates", t.candidates, w);
    if (e.contains("lambda_min")) t.lambda1_min = t.lambda2_min = detail::get<double>(e, "lambda_min", w);
    if (e.contains("lambda_max")) t.lambda1_max = t.lambda2_max = detail::get<double>(e, "lambda_max", w);
    detail::maybe(e, "debias", t.debias, w);
    detail::maybe(e, "tolerance", c.elastic_net.solver.tolerance, w);
    detail::maybe(e, "max_sweeps", c.elastic_net.solver.max_sweeps, w);
  }
  if (j.contains("random_forest")) {
    const json& r = j.at("random_forest");
    const std::string w = "random_forest";
    detail::check_keys(r, {"trees", "mtry", "min_leaf", "max_depth", "bootstrap"}, w);
    detail::maybe(r, "trees", c.random_forest.trees, w);
    detail::maybe(r, "mtry", c.random_forest.tree.mtry, w);
    detail::maybe(r, "min_leaf", c.random_forest.tree.min_leaf, w);
    detail::maybe(r, "max_depth", c.random_forest.tree.max_depth, w);
    detail::maybe(r, "bootstrap", c.random_forest.bootstrap, w);
  }
  check(c);
  return c;
}

// Everything that determines the results. Parallelism is left out: results
// do not depend on it.
inline json to_json(const AnalysisConfig& c) {
  json j;
  j["data"] = c.data;
  j["columns"] = c.columns;
  j["aggregate_covariates"] = c.aggregate_covariates;
  j["outcomes"] = c.outcomes;
  j["learners"] = c.learners;
  j["splits"] = c.splits;
  j["alpha"] = c.alpha;
  j["seed"] = c.seed;
  j["variance"] = c.variance;
  j["propensity"] = c.propensity;
  j["fixed_effects"] = c.fixed_effects;
  j["reference"] = c.reference;
  j["clan"] = detail::clan_name(c.clan);
  j["clan_covariates"] = c.clan_covariates;
  j["clan_detection_level"] = c.clan_detection_level;
  j["max_failure_share"] = c.max_failure_share;
  const auto& t = c.elastic_net.tuning;
  j["elastic_net"] = {{"folds", t.folds},
                      {"repeats", t.repeats},
                      {"candidates", t.candidates},
                      {"lambda_min", t.lambda1_min},
                      {"lambda_max", t.lambda1_max},
                      {"debias", t.debias},
                      {"tolerance", c.elastic_net.solver.tolerance},
                      {"max_sweeps", c.elastic_net.solver.max_sweeps}};
  j["random_forest"] = {{"trees", c.random_forest.trees},
                        {"mtry", c.random_forest.tree.mtry},
                        {"min_leaf", c.random_forest.tree.min_leaf},
                        {"max_depth", c.random_forest.tree.max_depth},
                        {"bootstrap", c.random_forest.bootstrap}};
  return j;
}

inline json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path.string() + "'");
  try {
    return json::parse(in, nullptr, true, true);
  } catch (const json::parse_error& e) {
    throw ConfigError("config file '" + path.string() + "' is not valid JSON: " + e.what());
  }
}

inline AnalysisConfig load(const std::filesystem::path& path) {
  return from_json(read_json_file(path), path.parent_path());
}

inline std::filesystem::path data_path(const AnalysisConfig& c) {
  std::filesystem::path p(c.data);
  return p.is_absolute() ? p : c.base_dir / p;
}

// Outcome columns to analyze, in config order.
inline std::vector<std::string> outcome_columns(const AnalysisConfig& c) {
  if (!c.outcomes.empty()) return c.outcomes;
  std::vector<std::string> out;
  for (const auto& [col, role] : c.columns)
    if (role == "outcome") out.push_back(col);
  if (out.empty()) throw ConfigError("config: no column has role 'outcome'");
  return out;
}

// Schema for one outcome; the other outcome columns are ignored.
inline Schema schema_for(const AnalysisConfig& c, const std::string& outcome) {
  Schema s;
  for (const auto& [col, role] : c.columns) {
    Role r = parse_role(role);
    if (r == Role::outcome && col != outcome) r = Role::ignore;
    s.roles[col] = r;
  }
  s.aggregate.insert(c.aggregate_covariates.begin(), c.aggregate_covariates.end());
  return s;
}

inline AnalysisOptions analysis_options(const AnalysisConfig& c) {
  AnalysisOptions o;
  o.splits = c.splits;
  o.alpha = c.alpha;
  o.seed = c.seed;
  o.variance = c.variance == "cluster" ? VarianceKind::cr1 : VarianceKind::hc1;
  o.propensity = c.propensity == "per_stratum" ? PropensityMode::per_stratum : PropensityMode::global;
  o.reference = c.reference == "t" ? Reference::student_t : Reference::normal;
  o.fixed_effects = c.fixed_effects == "dummies" ? FixedEffects::dummies
                    : c.fixed_effects == "absorb" ? FixedEffects::absorb
                                                  : FixedEffects::automatic;
  o.clan = c.clan != ClanMode::off;
  o.clan_covariates = c.clan_covariates;
  o.household_aggregate = true;
  o.parallelism = c.parallelism;
  o.max_failure_share = c.max_failure_share;
  return o;
}

inline std::vector<ArmLearner> learners(const AnalysisConfig& c) {
  std::vector<ArmLearner> out;
  for (const auto& l : c.learners)
    out.push_back(l == "en" ? elastic_net_learner(c.elastic_net) : random_forest_learner(c.random_forest));
  return out;
}

// Synthetic data-generating process -------------------------------------------

inline synth::DgpSpec dgp_from_json(const json& j) {
  const std::string w = "dgp config";
  detail::check_keys(j, {"n", "p", "p_true", "baseline", "baseline_scale", "effect", "effect_level", "effect_scale",
                         "noise_sd", "noise", "t_df", "clusters", "cluster_sd", "strata", "seed"},
                     w);
  synth::DgpSpec g;
  detail::maybe(j, "n", g.n, w);
  detail::maybe(j, "p", g.p, w);
  detail::maybe(j, "p_true", g.p_true, w);
  if (j.contains("baseline")) {
    const auto s = detail::get<std::string>(j, "baseline", w);
    if (s == "constant") g.baseline = synth::Baseline::constant;
    else if (s == "linear") g.baseline = synth::Baseline::linear;
    else if (s == "step") g.baseline = synth::Baseline::step;
    else throw ConfigError("dgp: baseline must be constant, linear or step");
  }
  detail::maybe(j, "baseline_scale", g.baseline_scale, w);
  if (j.contains("effect")) {
    const auto s = detail::get<std::string>(j, "effect", w);
    if (s == "constant") g.effect = synth::Effect::constant;
    else if (s == "linear") g.effect = synth::Effect::linear;
    else if (s == "step4") g.effect = synth::Effect::step4;
    else if (s == "band") g.effect = synth::Effect::band;
    else throw ConfigError("dgp: effect must be constant, linear, step4 or band");
  }
  detail::maybe(j, "effect_level", g.effect_level, w);
  detail::maybe(j, "effect_scale", g.effect_scale, w);
  detail::maybe(j, "noise_sd", g.noise_sd, w);
  if (j.contains("noise")) {
    const auto s = detail::get<std::string>(j, "noise", w);
    if (s == "gaussian") g.noise = synth::Noise::gaussian;
    else if (s == "student_t") g.noise = synth::Noise::student_t;
    else throw ConfigError("dgp: noise must be gaussian or student_t");
  }
  detail::maybe(j, "t_df", g.t_df, w);
  detail::maybe(j, "clusters", g.clusters, w);
  detail::maybe(j, "cluster_sd", g.cluster_sd, w);
  detail::maybe(j, "strata", g.strata, w);
  detail::maybe(j, "seed", g.seed, w);
  g.validate();
  return g;
}

inline json dgp_to_json(const synth::DgpSpec& g) {
  static const char* baselines[] = {"constant", "linear", "step"};
  static const char* effects[] = {"constant", "linear", "step4", "band"};
  static const char* noises[] = {"gaussian", "student_t"};
  return {{"n", g.n},
          {"p", g.p},
          {"p_true", g.p_true},
          {"baseline", baselines[static_cast<int>(g.baseline)]},
          {"baseline_scale", g.baseline_scale},
          {"effect", effects[static_cast<int>(g.effect)]},
          {"effect_level", g.effect_level},
          {"effect_scale", g.effect_scale},
          {"noise_sd", g.noise_sd},
          {"noise", noises[static_cast<int>(g.noise)]},
          {"t_df", g.t_df},
          {"clusters", g.clusters},
          {"cluster_sd", g.cluster_sd},
          {"strata", g.strata},
          {"seed", g.seed}};
}

}  // namespace genml::config
