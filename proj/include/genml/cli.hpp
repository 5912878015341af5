#pragma once

// Command implementations behind the genml executable. Each command returns
// a process exit code; artifacts are assembled in memory and written only
// once every outcome has succeeded.

#include <cctype>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "genml/config.hpp"
#include "genml/csv.hpp"
#include "genml/dataset.hpp"
#include "genml/inference.hpp"
#include "genml/random.hpp"
#include "genml/report.hpp"
#include "genml/synth.hpp"

namespace genml::cli {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

enum ExitCode : int { ok = 0, failure = 1, config_error = 2, validation_error = 3, estimation_error = 4 };

inline constexpr const char* kVersion = "1.0.0";
inline constexpr const char* kOutputEnv = "GENML_OUTPUT_DIR";
inline constexpr const char* kDefaultOutput = "genml_out";

struct AnalyzeOverrides {
  std::optional<int> splits;
  std::optional<double> alpha;
  std::optional<std::vector<std::string>> learners;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<config::ClanMode> clan;
  std::optional<int> parallelism;
};

// --out, then the config's output_dir (relative to the config file), then
// the environment, then ./genml_out.
inline fs::path output_dir(const config::AnalysisConfig& c, const std::optional<std::string>& flag) {
  if (flag) return fs::path(*flag);
  if (c.output_dir) {
    fs::path p(*c.output_dir);
    return p.is_absolute() ? p : c.base_dir / p;
  }
  if (const char* env = std::getenv(kOutputEnv); env && *env) return fs::path(env);
  return fs::path(kDefaultOutput);
}

inline std::string safe_name(const std::string& s) {
  std::string out;
  for (char ch : s) out.push_back(std::isalnum(static_cast<unsigned char>(ch)) || ch == '-' || ch == '_' || ch == '.' ? ch : '_');
  return out.empty() ? "outcome" : out;
}

inline std::string read_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw ConfigError("cannot open data file '" + p.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline std::string hex64(std::uint64_t v) {
  std::ostringstream ss;
  ss << std::hex << std::setw(16) << std::setfill('0') << v;
  return ss.str();
}

// Pending output files, keyed by path.
using Artifacts = std::map<fs::path, std::string>;

inline void write_artifacts(const Artifacts& files) {
  for (const auto& [path, body] : files) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
    out << body;
    if (!out) throw std::runtime_error("failed writing '" + path.string() + "'");
  }
}

inline Dataset prepare_dataset(const config::AnalysisConfig& c, const csv::Table& table, const std::string& outcome) {
  Dataset d = dummify_missing(from_table(table, config::schema_for(c, outcome)));
  d.validate();
  if (c.propensity == "per_stratum" && !d.strata)
    throw ConfigError("per_stratum propensity requires a column with role 'strata'");
  return d;
}

// Runs a command body and maps the library's exception types to exit codes.
template <class F>
int guarded(std::ostream& err, F&& body) {
  try {
    return body();
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return config_error;
  } catch (const ValidationError& e) {
    err << "validation error: " << e.what() << '\n';
    return validation_error;
  } catch (const EstimationError& e) {
    err << "estimation error: " << e.what() << '\n';
    return estimation_error;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return failure;
  }
}

inline config::AnalysisConfig apply(config::AnalysisConfig c, const AnalyzeOverrides& o) {
  if (o.splits) c.splits = *o.splits;
  if (o.alpha) c.alpha = *o.alpha;
  if (o.learners) c.learners = *o.learners;
  if (o.seed) c.seed = *o.seed;
  if (o.clan) c.clan = *o.clan;
  if (o.parallelism) c.parallelism = *o.parallelism;
  config::check(c);
  return c;
}

struct OutcomeReport {
  std::string outcome;
  Dataset data;
  AnalysisResult result;
  std::vector<BalanceRow> balance;
  bool clan_reported = false;
};

inline std::string render_text_report(const OutcomeReport& r, const config::AnalysisConfig& c) {
  std::ostringstream os;
  const auto& opt = r.result.options;
  os << "Outcome: " << r.outcome << "\n";
  os << "Observations: " << r.data.n_obs() << " (dropped " << r.data.dropped_rows << ")\n";
  os << "Splits: " << opt.splits << ", per-split level " << report::fixed(1.0 - opt.alpha, 2) << ", reported level "
     << report::fixed(1.0 - 2.0 * opt.alpha, 2) << "\n";
  os << "Variance: " << (c.variance == "cluster" ? "cluster-robust (CR1)" : "heteroskedasticity-robust (HC1)") << "\n\n";
  os << "Best linear predictor\n" << report::render_blp(report::blp_rows(r.result)) << "\n";
  os << "Sorted group average treatment effects\n"
     << report::render_gates(report::gates_rows(r.result), opt.groups) << "\n";
  if (r.clan_reported)
    for (const auto& la : r.result.learners)
      os << "Classification analysis (" << la.display_name << ")\n"
         << report::render_clan(report::clan_rows(la, c.clan_covariates), opt.groups) << "\n";
  if (r.result.learners.size() >= 2) os << "Learner comparison\n" << report::render_learners(report::learner_rows(r.result)) << "\n";
  std::vector<std::string> labels;
  std::vector<std::vector<report::R2Row>> cols;
  for (const auto& la : r.result.learners) {
    labels.push_back(la.display_name);
    cols.push_back(report::r2_rows(la));
  }
  os << "Adjusted R2 of most vs least affected membership\n" << report::render_r2(labels, cols) << "\n";
  os << "Balance\n" << report::render_balance(r.balance);
  return os.str();
}

inline void add_outcome_artifacts(Artifacts& files, const fs::path& dir, const OutcomeReport& r,
                                  const config::AnalysisConfig& c) {
  const auto& res = r.result;
  files[dir / "blp.csv"] = csv::format(report::blp_csv(report::blp_rows(res)));
  files[dir / "gates.csv"] = csv::format(report::gates_csv(report::gates_rows(res)));
  if (r.clan_reported) {
    std::vector<std::pair<std::string, std::vector<report::ClanRowView>>> by;
    for (const auto& la : res.learners) by.emplace_back(la.tag, report::clan_rows(la, c.clan_covariates));
    files[dir / "clan.csv"] = csv::format(report::clan_csv(by));
  }
  files[dir / "learner_comparison.csv"] = csv::format(report::learner_csv(report::learner_rows(res)));
  files[dir / "balance.csv"] = csv::format(report::balance_csv(r.balance));
  std::vector<std::string> labels;
  std::vector<std::vector<report::R2Row>> cols;
  for (const auto& la : res.learners) {
    labels.push_back(la.tag);
    cols.push_back(report::r2_rows(la));
  }
  files[dir / "hh_vs_agg.csv"] = csv::format(report::r2_csv(labels, cols));
  files[dir / "gates_plot.csv"] = csv::format(report::gates_plot_csv(res));
  files[dir / "report.txt"] = render_text_report(r, c);
}

inline json outcome_json(const OutcomeReport& r, const config::AnalysisConfig& c) {
  json j;
  j["outcome"] = r.outcome;
  j["n_obs"] = r.data.n_obs();
  j["dropped_rows"] = r.data.dropped_rows;
  j["propensity"] = r.result.propensity.global;
  j["clan_reported"] = r.clan_reported;
  j["learners"] = json::array();
  for (const auto& la : r.result.learners)
    j["learners"].push_back(report::learner_json(la, r.clan_reported ? std::optional<int>(c.clan_covariates) : std::nullopt));
  j["learner_selection"] = report::verdicts_json(r.result);
  j["balance"] = report::balance_json(r.balance);
  return j;
}

inline int cmd_analyze(const fs::path& config_path, const AnalyzeOverrides& overrides, std::ostream& out,
                       std::ostream& err) {
  return guarded(err, [&]() -> int {
    const config::AnalysisConfig cfg = apply(config::load(config_path), overrides);
    const fs::path data_file = config::data_path(cfg);
    const std::string bytes = read_bytes(data_file);
    std::istringstream in(bytes);
    const csv::Table table = csv::parse(in);
    const AnalysisOptions opt = config::analysis_options(cfg);
    const auto learners = config::learners(cfg);

    std::vector<OutcomeReport> reports;
    for (const auto& outcome : config::outcome_columns(cfg)) {
      OutcomeReport r;
      r.outcome = outcome;
      r.data = prepare_dataset(cfg, table, outcome);
      r.balance = balance_table(r.data, opt.variance, opt.alpha);
      r.result = run_analysis(r.data, opt, learners);
      switch (cfg.clan) {
        case config::ClanMode::on:
          r.clan_reported = true;
          break;
        case config::ClanMode::off:
          r.clan_reported = false;
          break;
        case config::ClanMode::automatic:
          for (const auto& la : r.result.learners) r.clan_reported |= heterogeneity_detected(la, cfg.clan_detection_level);
          break;
      }
      for (const auto& la : r.result.learners) {
        std::map<std::string, int> warnings;
        for (const auto& s : la.splits)
          for (const auto& w : s.warnings) ++warnings[w];
        for (const auto& [w, count] : warnings) err << "warning: " << outcome << "/" << la.tag << ": " << w << " (" << count << " splits)\n";
        if (!la.failures.empty())
          err << "warning: " << outcome << "/" << la.tag << ": " << la.failures.size() << " of " << opt.splits << " splits failed\n";
      }
      reports.push_back(std::move(r));
    }

    const fs::path dir = output_dir(cfg, overrides.out);
    Artifacts files;
    json results;
    results["tool"] = "genml";
    results["version"] = kVersion;
    results["outcomes"] = json::array();
    json manifest;
    manifest["tool"] = "genml";
    manifest["version"] = kVersion;
    manifest["command"] = "analyze";
    manifest["config"] = config::to_json(cfg);
    manifest["data_file"] = cfg.data;
    manifest["data_fnv1a64"] = hex64(hash_tag(bytes));
    manifest["seed"] = cfg.seed;
    manifest["outcomes"] = json::array();
    for (const auto& r : reports) {
      add_outcome_artifacts(files, dir / safe_name(r.outcome), r, cfg);
      results["outcomes"].push_back(outcome_json(r, cfg));
      json m;
      m["outcome"] = r.outcome;
      m["directory"] = safe_name(r.outcome);
      m["n_obs"] = r.data.n_obs();
      m["dropped_rows"] = r.data.dropped_rows;
      std::size_t failed = 0;
      for (const auto& la : r.result.learners) {
        m["split_failures"][la.tag] = la.failures.size();
        failed += la.failures.size();
      }
      m["split_failure_total"] = failed;
      manifest["outcomes"].push_back(m);
    }
    files[dir / "results.json"] = results.dump(2) + "\n";
    files[dir / "run_manifest.json"] = manifest.dump(2) + "\n";
    write_artifacts(files);
    out << "wrote " << files.size() << " files to " << dir.string() << "\n";
    return ok;
  });
}

inline int cmd_validate(const fs::path& config_path, const std::optional<std::string>& out_flag, std::ostream& out,
                        std::ostream& err) {
  return guarded(err, [&]() -> int {
    const config::AnalysisConfig cfg = config::load(config_path);
    const std::string bytes = read_bytes(config::data_path(cfg));
    std::istringstream in(bytes);
    const csv::Table table = csv::parse(in);
    const AnalysisOptions opt = config::analysis_options(cfg);
    const fs::path dir = output_dir(cfg, out_flag);
    Artifacts files;
    for (const auto& outcome : config::outcome_columns(cfg)) {
      const Dataset d = prepare_dataset(cfg, table, outcome);
      const PropensityModel prop = estimate_propensity(d, opt.propensity);
      const auto balance = balance_table(d, opt.variance, opt.alpha);
      out << "outcome " << outcome << ": " << d.n_obs() << " rows (" << d.dropped_rows << " dropped), "
          << d.treated_count() << " treated, p-hat " << report::fixed(prop.global) << "\n";
      if (d.strata) out << "  strata: " << d.strata->levels() << ", every stratum has both arms\n";
      out << report::render_balance(balance);
      files[dir / safe_name(outcome) / "balance.csv"] = csv::format(report::balance_csv(balance));
    }
    write_artifacts(files);
    return ok;
  });
}

inline int cmd_simulate(const fs::path& config_path, const fs::path& out_csv, std::ostream& out, std::ostream& err) {
  return guarded(err, [&]() -> int {
    const synth::DgpSpec spec = config::dgp_from_json(config::read_json_file(config_path));
    const synth::SynthData s = synth::generate(spec);
    std::ostringstream data;
    synth::write_csv(s, data);
    json truth;
    truth["dgp"] = config::dgp_to_json(spec);
    truth["ate"] = s.ate;
    truth["population_ate"] = s.population_ate;
    truth["s0"] = std::vector<double>(s.s0.data(), s.s0.data() + s.s0.size());
    truth["b0"] = std::vector<double>(s.b0.data(), s.b0.data() + s.b0.size());
    fs::path sidecar = out_csv;
    sidecar.replace_extension(".truth.json");
    write_artifacts({{out_csv, data.str()}, {sidecar, truth.dump(2) + "\n"}});
    out << "wrote " << spec.n << " rows to " << out_csv.string() << " and ground truth to " << sidecar.string() << "\n";
    return ok;
  });
}

}  // namespace genml::cli
