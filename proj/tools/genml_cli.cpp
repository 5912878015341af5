#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "genml/cli.hpp"

namespace {

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Generic machine-learning inference on heterogeneous treatment effects in randomized trials"};
  app.require_subcommand(1);
  app.set_version_flag("--version", genml::cli::kVersion);

  std::string config_path;
  std::optional<std::string> out_dir;

  auto* analyze = app.add_subcommand("analyze", "Estimate BLP, GATES and CLAN over repeated sample splits");
  analyze->add_option("--config", config_path, "Analysis config (JSON)")->required()->check(CLI::ExistingFile);
  std::optional<int> splits, parallelism;
  std::optional<double> alpha;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> ml, clan;
  analyze->add_option("--splits", splits, "Number of sample splits")->check(CLI::PositiveNumber);
  analyze->add_option("--alpha", alpha, "Per-split significance level");
  analyze->add_option("--ml", ml, "Comma-separated learners: en, rf");
  analyze->add_option("--seed", seed, "Master seed");
  analyze->add_option("--out", out_dir, "Output directory");
  analyze->add_option("--clan", clan, "Classification analysis: on, off or auto")->check(CLI::IsMember({"on", "off", "auto"}));
  analyze->add_option("--parallelism", parallelism, "Worker threads (0: all cores)")->check(CLI::NonNegativeNumber);

  auto* simulate = app.add_subcommand("simulate", "Generate a synthetic trial with known treatment effects");
  std::string sim_out;
  simulate->add_option("--config", config_path, "Data-generating process config (JSON)")->required()->check(CLI::ExistingFile);
  simulate->add_option("--out", sim_out, "Output CSV path")->required();

  auto* validate = app.add_subcommand("validate", "Check overlap and covariate balance without estimation");
  validate->add_option("--config", config_path, "Analysis config (JSON)")->required()->check(CLI::ExistingFile);
  validate->add_option("--out", out_dir, "Output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : genml::cli::config_error;
  }

  if (*analyze) {
    genml::cli::AnalyzeOverrides o;
    o.splits = splits;
    o.alpha = alpha;
    o.seed = seed;
    o.out = out_dir;
    o.parallelism = parallelism;
    if (ml) o.learners = split_list(*ml);
    if (clan) o.clan = genml::config::parse_clan_mode(*clan);
    return genml::cli::cmd_analyze(config_path, o, std::cout, std::cerr);
  }
  if (*simulate) return genml::cli::cmd_simulate(config_path, sim_out, std::cout, std::cerr);
  return genml::cli::cmd_validate(config_path, out_dir, std::cout, std::cerr);
}
