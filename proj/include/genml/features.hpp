#pragma once

// Per-split features of the CATE estimated on the main sample: the best
// linear predictor (BLP), sorted group average treatment effects (GATES),
// classification analysis (CLAN), plus two comparison utilities.

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "genml/dataset.hpp"
#include "genml/proxy.hpp"
#include "genml/regression.hpp"
#include "genml/stats.hpp"

namespace genml {

struct FeatureOptions {
  VarianceKind variance = VarianceKind::hc1;
  double alpha = 0.05;
  Reference reference = Reference::normal;
  FixedEffects fixed_effects = FixedEffects::automatic;
  double degenerate_variance = 1e-12;  // Var(S) below this marks the proxy as constant
};

namespace detail {

inline VarianceSpec variance_for(const Dataset& d, std::span<const Index> rows, VarianceKind kind) {
  if (kind != VarianceKind::cr1) return VarianceSpec{kind, {}};
  if (!d.cluster) throw ConfigError("cluster-robust variance requires a cluster column");
  std::vector<int> ids;
  ids.reserve(rows.size());
  for (Index r : rows) ids.push_back(d.cluster->codes[static_cast<std::size_t>(r)]);
  return VarianceSpec::clustered(std::move(ids));
}

inline std::vector<int> strata_for(const Dataset& d, std::span<const Index> rows) {
  std::vector<int> out;
  if (!d.strata) return out;
  for (Index r : rows) out.push_back(d.strata->codes[static_cast<std::size_t>(r)]);
  return out;
}

inline double variance_of(const Vector& v) {
  return stats::population_variance(std::span<const double>(v.data(), static_cast<std::size_t>(v.size())));
}

// Shared design for the BLP and GATES regressions: weights (p(1-p))^-1,
// strata effects, and the proxies B(Z), S(Z) when they vary.
struct OrthogonalDesign {
  Vector y;
  Vector p;
  Vector centered_treatment;  // D - p
  DesignSpec spec;
};

inline OrthogonalDesign orthogonal_design(const Dataset& d, const ProxyPair& proxies, const PropensityModel& prop,
                                          const FeatureOptions& opt, bool include_cate, std::size_t extra_cols) {
  const auto& rows = proxies.rows;
  const Index m = static_cast<Index>(rows.size());
  OrthogonalDesign od;
  od.y = take(d.outcome, rows);
  od.p = prop.values(rows);
  od.centered_treatment = take(d.treatment, rows) - od.p;
  od.spec.weights = (od.p.array() * (1.0 - od.p.array())).inverse().matrix();
  od.spec.strata = strata_for(d, rows);
  od.spec.fixed_effects = opt.fixed_effects;
  od.spec.variance = variance_for(d, rows, opt.variance);
  od.spec.alpha = opt.alpha;
  od.spec.reference = opt.reference;
  // B and S enter as controls only; when one arm's prediction is constant,
  // S = const - B and the later copy is dropped.
  od.spec.drop_collinear = true;
  const bool with_b = variance_of(proxies.baseline) >= opt.degenerate_variance;
  const std::size_t k = (with_b ? 1 : 0) + (include_cate ? 1 : 0) + extra_cols;
  od.spec.regressors.resize(m, static_cast<Index>(k));
  Index c = 0;
  if (with_b) {
    od.spec.regressors.col(c++) = proxies.baseline;
    od.spec.names.push_back("B");
  }
  if (include_cate) {
    od.spec.regressors.col(c++) = proxies.cate;
    od.spec.names.push_back("S");
  }
  return od;
}

}  // namespace detail

struct BlpEstimate {
  CoefStat ate;  // beta1
  CoefStat het;  // beta2; meaningless when degenerate
  bool degenerate = false;
  double cate_variance = 0.0;  // Var(S) on the main sample, divisor n
  std::optional<double> alpha0, alpha1, alpha2;
  WlsFit fit;
};

// Y = a0 + strata + a1 B + a2 S + b1 (D - p) + b2 (D - p)(S - Sbar) + e by WLS
// with weights (p(1-p))^-1.
inline BlpEstimate estimate_blp(const Dataset& d, const ProxyPair& proxies, const PropensityModel& prop,
                                const FeatureOptions& opt = {}) {
  BlpEstimate est;
  est.cate_variance = detail::variance_of(proxies.cate);
  est.degenerate = est.cate_variance < opt.degenerate_variance;
  auto od = detail::orthogonal_design(d, proxies, prop, opt, !est.degenerate, est.degenerate ? 1 : 2);
  Index c = od.spec.regressors.cols() - (est.degenerate ? 1 : 2);
  od.spec.regressors.col(c++) = od.centered_treatment;
  od.spec.names.push_back("D-p");
  if (!est.degenerate) {
    od.spec.regressors.col(c) = od.centered_treatment.cwiseProduct((proxies.cate.array() - proxies.cate_mean).matrix());
    od.spec.names.push_back("(D-p)(S-Sbar)");
  }
  est.fit = fit_wls(od.y, od.spec);
  if (!est.fit.has("D-p")) throw EstimationError("estimate_blp: treatment term is collinear with the controls");
  if (!est.degenerate && !est.fit.has("(D-p)(S-Sbar)")) est.degenerate = true;
  est.ate = est.fit.stat("D-p");
  if (!est.degenerate) est.het = est.fit.stat("(D-p)(S-Sbar)");
  if (est.fit.has("(intercept)")) est.alpha0 = est.fit.coef(est.fit.index_of("(intercept)"));
  if (est.fit.has("B")) est.alpha1 = est.fit.coef(est.fit.index_of("B"));
  if (est.fit.has("S")) est.alpha2 = est.fit.coef(est.fit.index_of("S"));
  return est;
}

struct GatesEstimate {
  std::vector<CoefStat> gamma;  // gamma_1 .. gamma_K
  CoefStat difference;          // gamma_K - gamma_1
  WlsFit fit;
};

inline std::string gates_term(int k) { return "(D-p)1{G" + std::to_string(k) + "}"; }

// Same weights and nuisance terms as the BLP with the orthogonalized group
// indicators (D - p) 1{i in G_k} as regressors of interest.
inline GatesEstimate estimate_gates(const Dataset& d, const ProxyPair& proxies, const GroupAssignment& groups,
                                    const PropensityModel& prop, const FeatureOptions& opt = {}) {
  const int K = groups.groups;
  if (groups.group.size() != proxies.rows.size()) throw std::invalid_argument("estimate_gates: groups do not match proxies");
  for (int k = 1; k <= K; ++k)
    if (std::find(groups.group.begin(), groups.group.end(), k) == groups.group.end())
      throw EstimationError("estimate_gates: group " + std::to_string(k) + " is empty");
  const bool with_s = detail::variance_of(proxies.cate) >= opt.degenerate_variance;
  auto od = detail::orthogonal_design(d, proxies, prop, opt, with_s, static_cast<std::size_t>(K));
  Index c = od.spec.regressors.cols() - K;
  for (int k = 1; k <= K; ++k) {
    Vector col(od.centered_treatment.size());
    for (Index i = 0; i < col.size(); ++i) col(i) = groups.group[static_cast<std::size_t>(i)] == k ? od.centered_treatment(i) : 0.0;
    od.spec.regressors.col(c++) = col;
    od.spec.names.push_back(gates_term(k));
  }
  GatesEstimate est;
  est.fit = fit_wls(od.y, od.spec);
  for (int k = 1; k <= K; ++k)
    if (!est.fit.has(gates_term(k))) throw EstimationError("estimate_gates: group term " + gates_term(k) + " is collinear");
  for (int k = 1; k <= K; ++k) est.gamma.push_back(est.fit.stat(gates_term(k)));
  est.difference = linear_combination_test(est.fit, {{gates_term(K), 1.0}, {gates_term(1), -1.0}});
  return est;
}

struct ClanRow {
  std::string covariate;
  double correlation = 0.0;  // corr(z_j, S) on the main sample
  CoefStat least;            // delta_1
  CoefStat most;             // delta_K
  CoefStat difference;       // delta_K - delta_1
};

struct ClanEstimate {
  std::vector<ClanRow> rows;
};

struct ClanSelection {
  int count = 5;  // <= 0 selects every eligible covariate
};

// |corr(z_j, S)| on the main sample for covariates eligible for CLAN
// (missingness indicators and constant columns excluded), sorted by
// decreasing |corr| with ties broken by column order.
inline std::vector<std::pair<Index, double>> clan_candidates(const Dataset& d, const ProxyPair& proxies) {
  std::vector<std::pair<Index, double>> out;
  const std::span<const double> s(proxies.cate.data(), static_cast<std::size_t>(proxies.cate.size()));
  for (Index j = 0; j < d.covariates.cols(); ++j) {
    if (d.missing_indicators.count(d.covariate_names[static_cast<std::size_t>(j)])) continue;
    Vector z = take(d.covariates.col(j), proxies.rows);
    if (detail::variance_of(z) <= 0.0) continue;
    out.emplace_back(j, stats::correlation(std::span<const double>(z.data(), static_cast<std::size_t>(z.size())), s));
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const auto& a, const auto& b) { return std::fabs(a.second) > std::fabs(b.second); });
  return out;
}

// z = d1 1{G1} + dK 1{GK} + e over main rows in G1 or GK; the coefficients are
// the subgroup means.
inline ClanEstimate estimate_clan(const Dataset& d, const ProxyPair& proxies, const GroupAssignment& groups,
                                  const ClanSelection& selection = {}, const FeatureOptions& opt = {}) {
  const int K = groups.groups;
  std::vector<Index> rows;  // positions in proxies.rows
  std::vector<Index> data_rows;
  for (std::size_t i = 0; i < groups.group.size(); ++i)
    if (groups.group[i] == 1 || groups.group[i] == K) {
      rows.push_back(static_cast<Index>(i));
      data_rows.push_back(proxies.rows[i]);
    }
  DesignSpec spec;
  spec.intercept = false;
  spec.regressors.resize(static_cast<Index>(rows.size()), 2);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const int g = groups.group[static_cast<std::size_t>(rows[r])];
    spec.regressors(static_cast<Index>(r), 0) = g == 1 ? 1.0 : 0.0;
    spec.regressors(static_cast<Index>(r), 1) = g == K ? 1.0 : 0.0;
  }
  spec.names = {"G1", "G" + std::to_string(K)};
  spec.variance = detail::variance_for(d, data_rows, opt.variance);
  spec.alpha = opt.alpha;
  spec.reference = opt.reference;

  auto candidates = clan_candidates(d, proxies);
  if (selection.count > 0 && candidates.size() > static_cast<std::size_t>(selection.count))
    candidates.resize(static_cast<std::size_t>(selection.count));
  ClanEstimate est;
  for (const auto& [j, corr] : candidates) {
    Vector z = take(d.covariates.col(j), data_rows);
    WlsFit fit = fit_wls(z, spec);
    ClanRow row;
    row.covariate = d.covariate_names[static_cast<std::size_t>(j)];
    row.correlation = corr;
    row.least = fit.stat(0);
    row.most = fit.stat(1);
    row.difference = linear_combination_test(fit, Vector{{-1.0, 1.0}});
    est.rows.push_back(row);
  }
  return est;
}

struct InteractionFit {
  CoefStat rho0, rho1, rho2, rho3;  // intercept, D, X, D x X
  WlsFit fit;
};

// Y = rho0 + rho1 D + rho2 X + rho3 (D x X) + v with robust standard errors.
inline InteractionFit baseline_interaction_model(const Dataset& d, const std::string& covariate,
                                                 const FeatureOptions& opt = {}) {
  const Index j = d.covariate_index(covariate);
  const Vector x = d.covariates.col(j);
  if (detail::variance_of(x) <= 0.0) throw ValidationError("covariate '" + covariate + "' is constant; interaction undefined");
  std::vector<Index> all(static_cast<std::size_t>(d.n_obs()));
  std::iota(all.begin(), all.end(), Index{0});
  DesignSpec spec;
  spec.regressors.resize(d.n_obs(), 3);
  spec.regressors.col(0) = d.treatment;
  spec.regressors.col(1) = x;
  spec.regressors.col(2) = d.treatment.cwiseProduct(x);
  spec.names = {"D", covariate, "D x " + covariate};
  spec.variance = detail::variance_for(d, all, opt.variance);
  spec.alpha = opt.alpha;
  spec.reference = opt.reference;
  InteractionFit out;
  out.fit = fit_wls(d.outcome, spec);
  out.rho0 = out.fit.stat(0);
  out.rho1 = out.fit.stat(1);
  out.rho2 = out.fit.stat(2);
  out.rho3 = out.fit.stat(3);
  return out;
}

struct HouseholdAggregateR2 {
  std::optional<double> aggregate;
  std::optional<double> household;
  std::optional<double> all;
  std::vector<std::string> warnings;
};

// Adjusted R^2 of 1{G_K} on aggregate-level covariates (with strata dummies),
// household-level covariates, and both, over main rows in G1 or GK.
inline HouseholdAggregateR2 hh_vs_agg_r2(const Dataset& d, const ProxyPair& proxies, const GroupAssignment& groups,
                                         const std::vector<std::string>& household,
                                         const std::vector<std::string>& aggregate) {
  std::set<std::string> hh(household.begin(), household.end()), agg(aggregate.begin(), aggregate.end());
  for (const auto& a : agg)
    if (hh.count(a)) throw ConfigError("covariate '" + a + "' is both household and aggregate level");
  if (hh.size() + agg.size() != d.covariate_names.size())
    throw ConfigError("household and aggregate covariate sets must cover every covariate");
  const int K = groups.groups;
  std::vector<Index> rows;
  Vector y;
  {
    std::vector<double> yy;
    for (std::size_t i = 0; i < groups.group.size(); ++i)
      if (groups.group[i] == 1 || groups.group[i] == K) {
        rows.push_back(proxies.rows[i]);
        yy.push_back(groups.group[i] == K ? 1.0 : 0.0);
      }
    y = Eigen::Map<Vector>(yy.data(), static_cast<Index>(yy.size()));
  }
  HouseholdAggregateR2 out;
  auto run = [&](const std::vector<std::string>& cols, bool with_strata) -> std::optional<double> {
    const bool strata = with_strata && d.strata && d.strata->levels() > 1;
    if (cols.empty() && !strata) return std::nullopt;
    DesignSpec spec;
    spec.regressors.resize(static_cast<Index>(rows.size()), static_cast<Index>(cols.size()));
    for (std::size_t c = 0; c < cols.size(); ++c)
      spec.regressors.col(static_cast<Index>(c)) = take(d.covariates.col(d.covariate_index(cols[c])), rows);
    spec.names = cols;
    if (strata) spec.strata = detail::strata_for(d, rows);
    spec.fixed_effects = FixedEffects::dummies;
    spec.drop_collinear = true;
    try {
      WlsFit fit = fit_wls(y, spec);
      for (const auto& name : fit.dropped) out.warnings.push_back("dropped collinear column '" + name + "'");
      return adjusted_r_squared(fit);
    } catch (const EstimationError& e) {
      out.warnings.push_back(e.what());
      return std::nullopt;
    }
  };
  std::vector<std::string> hh_cols, agg_cols, all_cols;
  for (const auto& name : d.covariate_names) {
    (agg.count(name) ? agg_cols : hh_cols).push_back(name);
    all_cols.push_back(name);
  }
  out.aggregate = run(agg_cols, true);
  out.household = run(hh_cols, false);
  out.all = run(all_cols, true);
  return out;
}

inline HouseholdAggregateR2 hh_vs_agg_r2(const Dataset& d, const ProxyPair& proxies, const GroupAssignment& groups) {
  std::vector<std::string> hh, agg;
  for (const auto& name : d.covariate_names) (d.aggregate_columns.count(name) ? agg : hh).push_back(name);
  return hh_vs_agg_r2(d, proxies, groups, hh, agg);
}

}  // namespace genml
