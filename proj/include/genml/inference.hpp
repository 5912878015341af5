#pragma once

// Repeated sample splitting: per-split features, median aggregation with
// splitting-adjusted confidence bands and p-values, and learner comparison.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <map>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "genml/dataset.hpp"
#include "genml/features.hpp"
#include "genml/learner.hpp"
#include "genml/proxy.hpp"
#include "genml/stats.hpp"

namespace genml {

// One split's estimate of a scalar target.
struct SplitEstimate {
  double point = 0.0;
  double lower = 0.0;
  double upper = 0.0;
  double p_value = 1.0;
  bool degenerate = false;
};

inline SplitEstimate split_estimate(const CoefStat& s, bool degenerate = false) {
  return {s.estimate, s.lower, s.upper, s.p_value, degenerate};
}

struct AggregatedEstimate {
  double point = 0.0;
  double lower = 0.0;
  double upper = 0.0;
  double p_adjusted = 1.0;
  double split_level = 0.95;     // 1 - alpha, per split
  double reported_level = 0.90;  // 1 - 2 alpha
  std::size_t splits = 0;        // estimates supplied
  std::size_t used = 0;          // non-degenerate estimates entering the medians
  bool degenerate = false;       // every split was degenerate
};

// Medians of points and of per-split bounds; p-value is twice the median
// p-value, clipped at 1. Degenerate splits count as p = 1 and are left out
// of the point and bound medians.
inline AggregatedEstimate aggregate_splits(std::span<const SplitEstimate> values, double alpha = 0.05) {
  if (values.empty()) throw std::invalid_argument("aggregate_splits: no split estimates");
  AggregatedEstimate a;
  a.splits = values.size();
  a.split_level = 1.0 - alpha;
  a.reported_level = 1.0 - 2.0 * alpha;
  std::vector<double> pts, lo, hi, ps;
  for (const auto& v : values) {
    ps.push_back(v.degenerate ? 1.0 : v.p_value);
    if (v.degenerate) continue;
    pts.push_back(v.point);
    lo.push_back(v.lower);
    hi.push_back(v.upper);
  }
  a.used = pts.size();
  a.p_adjusted = std::min(1.0, 2.0 * stats::median(ps));
  if (pts.empty()) {
    a.degenerate = true;
    return a;
  }
  a.point = stats::median(pts);
  a.lower = stats::median(lo);
  a.upper = stats::median(hi);
  return a;
}

// beta2^2 Var(S), variance with divisor n.
inline double lambda_blp(double beta2, std::span<const double> cate) {
  return beta2 * beta2 * stats::population_variance(cate);
}

inline double lambda_blp(double beta2, const Vector& cate) {
  return lambda_blp(beta2, std::span<const double>(cate.data(), static_cast<std::size_t>(cate.size())));
}

// Mean of squared group effects.
inline double lambda_gates(std::span<const double> gamma) {
  if (gamma.empty()) throw std::invalid_argument("lambda_gates: no group estimates");
  double s = 0.0;
  for (double g : gamma) s += g * g;
  return s / static_cast<double>(gamma.size());
}

struct LearnerVerdict {
  std::string criterion;              // "BLP" (Lambda) or "GATES" (Lambda-bar)
  std::optional<std::string> winner;  // empty on an exact tie
  bool tie = false;
  std::vector<std::pair<std::string, double>> values;
};

// Ordinal comparison: the learner with the largest value wins.
inline LearnerVerdict select_learner(std::string criterion, std::vector<std::pair<std::string, double>> values) {
  if (values.size() < 2) throw std::invalid_argument("select_learner: need at least two learners");
  LearnerVerdict v;
  v.criterion = std::move(criterion);
  v.values = values;
  double best = -std::numeric_limits<double>::infinity();
  for (const auto& [tag, value] : values) best = std::max(best, value);
  std::size_t hits = 0;
  for (const auto& [tag, value] : values)
    if (value == best) {
      ++hits;
      v.winner = tag;
    }
  if (hits > 1) {
    v.tie = true;
    v.winner.reset();
  }
  return v;
}

struct SplitResult {
  int split = 0;
  std::string learner;
  BlpEstimate blp;
  GatesEstimate gates;
  std::optional<ClanEstimate> clan;
  std::optional<HouseholdAggregateR2> household_aggregate;
  double lambda = 0.0;
  double lambda_bar = 0.0;
  std::vector<std::string> warnings;
};

struct AnalysisOptions {
  int splits = 50;
  double alpha = 0.05;
  std::uint64_t seed = 0;
  VarianceKind variance = VarianceKind::hc1;
  PropensityMode propensity = PropensityMode::global;
  Reference reference = Reference::normal;
  FixedEffects fixed_effects = FixedEffects::automatic;
  int groups = 4;
  bool clan = true;
  int clan_covariates = 5;
  bool household_aggregate = false;
  int parallelism = 1;  // 0: hardware concurrency
  double max_failure_share = 0.2;
};

// One split's features for one learner. Exposed for tests and custom drivers.
inline SplitResult analyze_split(const Dataset& d, const SplitAssignment& split, const ArmLearner& learner,
                                 const PropensityModel& prop, const AnalysisOptions& opt) {
  FeatureOptions fo;
  fo.variance = opt.variance;
  fo.alpha = opt.alpha;
  fo.reference = opt.reference;
  fo.fixed_effects = opt.fixed_effects;
  SplitResult r;
  r.split = split.index;
  r.learner = learner.tag;
  r.warnings = split.warnings;
  ProxyPair proxies = build_proxies(d, split, learner);
  GroupAssignment groups =
      assign_groups(proxies, opt.groups, derive_seed(split.seed, {0x67726f7570ULL, static_cast<std::uint64_t>(split.index)}));
  r.blp = estimate_blp(d, proxies, prop, fo);
  r.blp.fit = WlsFit{};
  r.gates = estimate_gates(d, proxies, groups, prop, fo);
  r.gates.fit = WlsFit{};
  r.lambda = r.blp.degenerate ? 0.0 : lambda_blp(r.blp.het.estimate, proxies.cate);
  std::vector<double> g;
  for (const auto& s : r.gates.gamma) g.push_back(s.estimate);
  r.lambda_bar = lambda_gates(g);
  if (opt.clan) r.clan = estimate_clan(d, proxies, groups, ClanSelection{0}, fo);
  if (opt.household_aggregate) {
    r.household_aggregate = hh_vs_agg_r2(d, proxies, groups);
    for (const auto& w : r.household_aggregate->warnings) r.warnings.push_back(w);
  }
  return r;
}

struct SplitFailure {
  int split = 0;
  std::string message;
};

struct AggregatedClanRow {
  std::string covariate;
  double median_abs_correlation = 0.0;
  AggregatedEstimate least;
  AggregatedEstimate most;
  AggregatedEstimate difference;
};

struct LearnerAnalysis {
  std::string tag;
  std::string display_name;
  std::vector<SplitResult> splits;  // successful splits, ordered by index
  std::vector<SplitFailure> failures;
  AggregatedEstimate ate;
  AggregatedEstimate het;
  std::vector<AggregatedEstimate> gamma;
  AggregatedEstimate gamma_difference;
  std::vector<AggregatedClanRow> clan;  // every eligible covariate, by decreasing median |corr|
  double lambda = 0.0;
  double lambda_bar = 0.0;
  std::optional<double> r2_aggregate, r2_household, r2_all;

  // The CLAN rows selected for reporting: the top `count` by median |corr|.
  std::vector<AggregatedClanRow> clan_selected(int count) const {
    std::vector<AggregatedClanRow> out(clan.begin(), clan.begin() + std::min<std::ptrdiff_t>(count, static_cast<std::ptrdiff_t>(clan.size())));
    return out;
  }
};

// True when the adjusted p-value of beta2 or of gamma_K - gamma_1 is below level.
inline bool heterogeneity_detected(const LearnerAnalysis& a, double level) {
  return (!a.het.degenerate && a.het.p_adjusted < level) || a.gamma_difference.p_adjusted < level;
}

struct AnalysisResult {
  std::vector<LearnerAnalysis> learners;
  std::vector<LearnerVerdict> verdicts;  // BLP and GATES, when two or more learners ran
  PropensityModel propensity;
  AnalysisOptions options;
  Index n_obs = 0;
};

namespace detail {

inline std::optional<double> median_of(const std::vector<std::optional<double>>& v) {
  std::vector<double> x;
  for (const auto& o : v)
    if (o) x.push_back(*o);
  if (x.empty()) return std::nullopt;
  return stats::median(x);
}

inline void aggregate_learner(LearnerAnalysis& la, const AnalysisOptions& opt) {
  std::vector<SplitEstimate> ate, het, diff;
  std::vector<std::vector<SplitEstimate>> gamma(static_cast<std::size_t>(opt.groups));
  std::vector<double> lam, lam_bar;
  std::vector<std::optional<double>> ra, rh, rall;
  struct ClanAcc {
    std::vector<double> corr;
    std::vector<SplitEstimate> least, most, diff;
  };
  std::map<std::string, ClanAcc> clan;
  std::vector<std::string> clan_order;
  for (const auto& s : la.splits) {
    ate.push_back(split_estimate(s.blp.ate));
    het.push_back(split_estimate(s.blp.het, s.blp.degenerate));
    for (std::size_t k = 0; k < gamma.size(); ++k) gamma[k].push_back(split_estimate(s.gates.gamma[k]));
    diff.push_back(split_estimate(s.gates.difference));
    lam.push_back(s.lambda);
    lam_bar.push_back(s.lambda_bar);
    if (s.household_aggregate) {
      ra.push_back(s.household_aggregate->aggregate);
      rh.push_back(s.household_aggregate->household);
      rall.push_back(s.household_aggregate->all);
    }
    if (s.clan)
      for (const auto& row : s.clan->rows) {
        auto [it, fresh] = clan.try_emplace(row.covariate);
        if (fresh) clan_order.push_back(row.covariate);
        it->second.corr.push_back(std::fabs(row.correlation));
        it->second.least.push_back(split_estimate(row.least));
        it->second.most.push_back(split_estimate(row.most));
        it->second.diff.push_back(split_estimate(row.difference));
      }
  }
  la.ate = aggregate_splits(ate, opt.alpha);
  la.het = aggregate_splits(het, opt.alpha);
  la.gamma.clear();
  for (const auto& g : gamma) la.gamma.push_back(aggregate_splits(g, opt.alpha));
  la.gamma_difference = aggregate_splits(diff, opt.alpha);
  la.lambda = stats::median(lam);
  la.lambda_bar = stats::median(lam_bar);
  la.r2_aggregate = median_of(ra);
  la.r2_household = median_of(rh);
  la.r2_all = median_of(rall);
  la.clan.clear();
  for (const auto& name : clan_order) {
    const auto& acc = clan.at(name);
    AggregatedClanRow row;
    row.covariate = name;
    row.median_abs_correlation = stats::median(acc.corr);
    row.least = aggregate_splits(acc.least, opt.alpha);
    row.most = aggregate_splits(acc.most, opt.alpha);
    row.difference = aggregate_splits(acc.diff, opt.alpha);
    la.clan.push_back(row);
  }
  std::stable_sort(la.clan.begin(), la.clan.end(), [](const auto& a, const auto& b) {
    return a.median_abs_correlation > b.median_abs_correlation;
  });
}

}  // namespace detail

// Runs every (split, learner) task, possibly concurrently, and reduces the
// results in split order. Throws EstimationError when the share of failed
// splits for any learner exceeds opt.max_failure_share.
inline AnalysisResult run_analysis(const Dataset& d, const AnalysisOptions& opt, const std::vector<ArmLearner>& learners) {
  if (learners.empty()) throw ConfigError("run_analysis: at least one learner is required");
  if (opt.splits < 1) throw ConfigError("run_analysis: need at least one split");
  if (!(opt.alpha > 0.0 && opt.alpha <= 0.25)) throw ConfigError("run_analysis: alpha must lie in (0, 0.25]");
  d.validate();
  AnalysisResult res;
  res.options = opt;
  res.n_obs = d.n_obs();
  res.propensity = estimate_propensity(d, opt.propensity);

  const std::size_t L = learners.size();
  const std::size_t tasks = static_cast<std::size_t>(opt.splits) * L;
  std::vector<std::optional<SplitResult>> results(tasks);
  std::vector<std::string> errors(tasks);
  auto run_task = [&](std::size_t t) {
    const int s = static_cast<int>(t / L);
    const ArmLearner& learner = learners[t % L];
    try {
      SplitAssignment split = make_split(d, s, opt.seed);
      results[t] = analyze_split(d, split, learner, res.propensity, opt);
    } catch (const std::exception& e) {
      errors[t] = e.what();
    }
  };
  int workers = opt.parallelism > 0 ? opt.parallelism : static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  workers = static_cast<int>(std::min<std::size_t>(static_cast<std::size_t>(workers), tasks));
  if (workers <= 1) {
    for (std::size_t t = 0; t < tasks; ++t) run_task(t);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w)
      pool.emplace_back([&] {
        for (std::size_t t = next++; t < tasks; t = next++) run_task(t);
      });
    for (auto& th : pool) th.join();
  }

  for (std::size_t l = 0; l < L; ++l) {
    LearnerAnalysis la;
    la.tag = learners[l].tag;
    la.display_name = learners[l].display_name;
    for (int s = 0; s < opt.splits; ++s) {
      const std::size_t t = static_cast<std::size_t>(s) * L + l;
      if (results[t]) {
        la.splits.push_back(std::move(*results[t]));
      } else {
        la.failures.push_back({s, errors[t]});
      }
    }
    const double share = static_cast<double>(la.failures.size()) / static_cast<double>(opt.splits);
    if (share > opt.max_failure_share || la.splits.empty())
      throw EstimationError("learner '" + la.tag + "': " + std::to_string(la.failures.size()) + " of " +
                            std::to_string(opt.splits) + " splits failed (first: " +
                            (la.failures.empty() ? std::string("none") : la.failures.front().message) + ")");
    detail::aggregate_learner(la, opt);
    res.learners.push_back(std::move(la));
  }
  if (L >= 2) {
    std::vector<std::pair<std::string, double>> blp, gates;
    for (const auto& la : res.learners) {
      blp.emplace_back(la.tag, la.lambda);
      gates.emplace_back(la.tag, la.lambda_bar);
    }
    res.verdicts.push_back(select_learner("BLP", blp));
    res.verdicts.push_back(select_learner("GATES", gates));
  }
  return res;
}

}  // namespace genml
