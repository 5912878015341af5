#pragma once

// One sample split: stratified main/auxiliary partition, per-arm learner fits
// on the auxiliary half, proxy predictions B(Z) and S(Z) on the main half,
// and sorted proxy groups.

#include <algorithm>
#include <numeric>
#include <string>
#include <vector>

#include "genml/dataset.hpp"
#include "genml/learner.hpp"
#include "genml/random.hpp"

namespace genml {

struct SplitAssignment {
  int index = 0;
  std::uint64_t seed = 0;  // master seed the split was derived from
  std::vector<Index> main;
  std::vector<Index> auxiliary;
  std::vector<std::string> warnings;
};

// Deterministic in (master seed, split index). Rows are shuffled within each
// stratum x arm cell and dealt half to each side; the odd row of a cell goes
// to alternating sides, starting with the main side on even split indices.
inline SplitAssignment make_split(const Dataset& d, int split_index, std::uint64_t master_seed) {
  SplitAssignment sa;
  sa.index = split_index;
  sa.seed = master_seed;
  const Index n = d.n_obs();
  const int levels = d.strata ? d.strata->levels() : 1;
  std::vector<std::vector<Index>> cells(static_cast<std::size_t>(2 * levels));
  for (Index i = 0; i < n; ++i) {
    const int s = d.strata ? d.strata->codes[static_cast<std::size_t>(i)] : 0;
    cells[static_cast<std::size_t>(2 * s + (d.treatment(i) == 1.0 ? 1 : 0))].push_back(i);
  }
  Rng rng(derive_seed(master_seed, {0x73706c6974ULL, static_cast<std::uint64_t>(split_index)}));
  bool extra_to_main = split_index % 2 == 0;
  for (std::size_t c = 0; c < cells.size(); ++c) {
    auto& cell = cells[c];
    if (cell.empty()) continue;
    if (cell.size() < 2) {
      std::string stratum = d.strata ? d.strata->labels[c / 2] : std::string("all");
      sa.warnings.push_back("stratum '" + stratum + "' arm " + std::to_string(c % 2) + " has a single row");
    }
    shuffle(cell, rng);
    const std::size_t half = cell.size() / 2;
    for (std::size_t k = 0; k < half; ++k) sa.main.push_back(cell[k]);
    for (std::size_t k = half; k < 2 * half; ++k) sa.auxiliary.push_back(cell[k]);
    if (cell.size() % 2 == 1) {
      (extra_to_main ? sa.main : sa.auxiliary).push_back(cell.back());
      extra_to_main = !extra_to_main;
    }
  }
  std::sort(sa.main.begin(), sa.main.end());
  std::sort(sa.auxiliary.begin(), sa.auxiliary.end());
  return sa;
}

struct ProxyPair {
  std::string learner;
  std::vector<Index> rows;  // main-sample rows, aligned with baseline/cate
  Vector baseline;          // B(Z), outcome units
  Vector cate;              // S(Z), outcome units
  double cate_mean = 0.0;   // S-bar over the main sample
};

// Fits the learner on each auxiliary arm and predicts on the main rows.
// Scaling, when the learner asks for it, is fitted on the auxiliary rows only.
inline ProxyPair build_proxies(const Dataset& d, const SplitAssignment& split, const ArmLearner& learner) {
  std::vector<Index> aux_t, aux_c;
  for (Index i : split.auxiliary) (d.treatment(i) == 1.0 ? aux_t : aux_c).push_back(i);
  const std::string where = "split " + std::to_string(split.index) + ", learner " + learner.tag + ": ";
  if (aux_t.empty() || aux_c.empty()) throw EstimationError(where + "auxiliary sample has an empty treatment arm");

  Matrix x_main = take_rows(d.covariates, split.main);
  ScalingMap scaling;
  if (learner.unit_scaling) {
    scaling = ScalingMap::fit(take_rows(d.covariates, split.auxiliary), take(d.outcome, split.auxiliary));
    x_main = scaling.apply_covariates(x_main);
  }
  auto fit_arm = [&](const std::vector<Index>& rows, Arm arm) {
    Matrix x = take_rows(d.covariates, rows);
    Vector y = take(d.outcome, rows);
    if (learner.unit_scaling) {
      x = scaling.apply_covariates(x);
      y = scaling.apply_outcome(y);
    }
    const std::uint64_t seed = derive_seed(split.seed, {static_cast<std::uint64_t>(split.index), hash_tag(learner.tag),
                                                        static_cast<std::uint64_t>(arm)});
    try {
      ArmPredictor pred = learner.fit(ArmFitRequest{x, y, arm, seed});
      Vector out = pred(x_main);
      if (learner.unit_scaling) out = scaling.invert_outcome(out);
      if (!out.allFinite()) throw EstimationError("non-finite predictions");
      return out;
    } catch (const std::exception& e) {
      throw EstimationError(where + e.what());
    }
  };
  ProxyPair pp;
  pp.learner = learner.tag;
  pp.rows = split.main;
  Vector y1 = fit_arm(aux_t, Arm::treated);
  pp.baseline = fit_arm(aux_c, Arm::control);
  pp.cate = y1 - pp.baseline;
  pp.cate_mean = pp.cate.size() ? pp.cate.mean() : 0.0;
  return pp;
}

struct GroupAssignment {
  std::vector<int> group;         // 1..K per main row, aligned with ProxyPair::rows
  std::vector<double> cut_points;  // K - 1 boundaries on the S(Z) scale
  int groups = 4;

  std::vector<Index> members(int k) const {
    std::vector<Index> out;
    for (std::size_t i = 0; i < group.size(); ++i)
      if (group[i] == k) out.push_back(static_cast<Index>(i));
    return out;
  }
};

// Ranks rows by S(Z), breaking ties with a seeded random key, and cuts the
// ranking into K groups whose sizes differ by at most one.
inline GroupAssignment assign_groups(const ProxyPair& proxies, int K = 4, std::uint64_t jitter_seed = 0) {
  const auto n = static_cast<std::size_t>(proxies.cate.size());
  if (K < 1 || n < static_cast<std::size_t>(K)) throw EstimationError("assign_groups: fewer main rows than groups");
  Rng rng(derive_seed(jitter_seed, {0x6a6974746572ULL}));
  std::vector<std::uint64_t> key(n);
  for (auto& k : key) k = rng();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const double sa = proxies.cate(static_cast<Index>(a)), sb = proxies.cate(static_cast<Index>(b));
    if (sa != sb) return sa < sb;
    if (key[a] != key[b]) return key[a] < key[b];
    return a < b;
  });
  GroupAssignment g;
  g.groups = K;
  g.group.assign(n, 0);
  for (std::size_t r = 0; r < n; ++r) g.group[order[r]] = static_cast<int>(r * static_cast<std::size_t>(K) / n) + 1;
  for (int k = 1; k < K; ++k) {
    // first rank of group k + 1
    std::size_t r = (static_cast<std::size_t>(k) * n + static_cast<std::size_t>(K) - 1) / static_cast<std::size_t>(K);
    const double lo = proxies.cate(static_cast<Index>(order[r - 1])), hi = proxies.cate(static_cast<Index>(order[r]));
    g.cut_points.push_back(0.5 * (lo + hi));
  }
  return g;
}

}  // namespace genml
