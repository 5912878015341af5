#pragma once

// Role-tagged trial data: CSV ingestion, missingness dummies, unit-interval
// scaling, propensity and covariate balance diagnostics.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "genml/csv.hpp"
#include "genml/error.hpp"
#include "genml/regression.hpp"
#include "genml/stats.hpp"

namespace genml {

enum class Role { outcome, treatment, covariate, cluster, strata, ignore };

inline Role parse_role(const std::string& s) {
  if (s == "outcome") return Role::outcome;
  if (s == "treatment") return Role::treatment;
  if (s == "covariate") return Role::covariate;
  if (s == "cluster") return Role::cluster;
  if (s == "strata") return Role::strata;
  if (s == "ignore") return Role::ignore;
  throw ConfigError("unknown column role '" + s + "'");
}

inline const char* role_name(Role r) {
  switch (r) {
    case Role::outcome: return "outcome";
    case Role::treatment: return "treatment";
    case Role::covariate: return "covariate";
    case Role::cluster: return "cluster";
    case Role::strata: return "strata";
    case Role::ignore: return "ignore";
  }
  return "ignore";
}

// Column name -> role. Columns of the file that are not listed are ignored.
struct Schema {
  std::map<std::string, Role> roles;
  std::set<std::string> aggregate;  // covariates describing villages/regions rather than households

  std::vector<std::string> columns_with(Role r) const {
    std::vector<std::string> out;
    for (const auto& [name, role] : roles)
      if (role == r) out.push_back(name);
    return out;
  }
};

// Categorical labels encoded as dense integer codes (sorted label order).
struct Categorical {
  std::string name;
  std::vector<int> codes;
  std::vector<std::string> labels;

  int levels() const { return static_cast<int>(labels.size()); }
};

inline Categorical encode_categorical(std::string name, const std::vector<std::string>& raw) {
  Categorical c;
  c.name = std::move(name);
  std::set<std::string> uniq(raw.begin(), raw.end());
  c.labels.assign(uniq.begin(), uniq.end());
  std::map<std::string, int> code;
  for (std::size_t i = 0; i < c.labels.size(); ++i) code[c.labels[i]] = static_cast<int>(i);
  c.codes.reserve(raw.size());
  for (const auto& s : raw) c.codes.push_back(code[s]);
  return c;
}

struct Dataset {
  std::string outcome_name;
  std::string treatment_name;
  Vector outcome;
  Vector treatment;  // 0/1
  Matrix covariates;
  std::vector<std::string> covariate_names;
  std::optional<Categorical> cluster;
  std::optional<Categorical> strata;
  std::set<std::string> missing_indicators;
  std::set<std::string> aggregate_columns;
  std::size_t dropped_rows = 0;

  Index n_obs() const { return outcome.size(); }
  Index n_covariates() const { return covariates.cols(); }

  Index covariate_index(const std::string& name) const {
    for (std::size_t j = 0; j < covariate_names.size(); ++j)
      if (covariate_names[j] == name) return static_cast<Index>(j);
    throw ConfigError("no covariate named '" + name + "'");
  }

  Index treated_count() const {
    Index c = 0;
    for (Index i = 0; i < treatment.size(); ++i) c += treatment(i) == 1.0;
    return c;
  }

  Dataset subset(std::span<const Index> rows) const {
    Dataset d;
    d.outcome_name = outcome_name;
    d.treatment_name = treatment_name;
    d.covariate_names = covariate_names;
    d.missing_indicators = missing_indicators;
    d.aggregate_columns = aggregate_columns;
    const Index m = static_cast<Index>(rows.size());
    d.outcome.resize(m);
    d.treatment.resize(m);
    d.covariates.resize(m, covariates.cols());
    for (Index r = 0; r < m; ++r) {
      d.outcome(r) = outcome(rows[r]);
      d.treatment(r) = treatment(rows[r]);
      d.covariates.row(r) = covariates.row(rows[r]);
    }
    auto sub = [&](const std::optional<Categorical>& c) -> std::optional<Categorical> {
      if (!c) return std::nullopt;
      Categorical out{c->name, {}, c->labels};
      for (Index r : rows) out.codes.push_back(c->codes[r]);
      return out;
    };
    d.cluster = sub(cluster);
    d.strata = sub(strata);
    return d;
  }

  // Throws ValidationError when a domain invariant fails.
  void validate() const {
    const Index n = n_obs();
    if (treatment.size() != n || covariates.rows() != n) throw ValidationError("dataset columns differ in length");
    if (static_cast<Index>(covariate_names.size()) != covariates.cols())
      throw ValidationError("covariate names do not match covariate columns");
    for (Index i = 0; i < n; ++i) {
      if (treatment(i) != 0.0 && treatment(i) != 1.0) throw ValidationError("treatment values must be 0 or 1");
      if (!std::isfinite(outcome(i))) throw ValidationError("outcome contains non-finite values");
    }
    if (!covariates.allFinite()) throw ValidationError("covariates contain missing values; apply dummify_missing first");
    const Index treated = treated_count();
    if (treated == 0 || treated == n)
      throw ValidationError("overlap violated: every unit needs positive probability of each treatment arm");
    if (strata) {
      std::vector<Index> t(strata->levels(), 0), c(strata->levels(), 0);
      for (Index i = 0; i < n; ++i) (treatment(i) == 1.0 ? t : c)[strata->codes[i]]++;
      for (int s = 0; s < strata->levels(); ++s)
        if (t[s] == 0 || c[s] == 0)
          throw ValidationError("overlap violated: stratum '" + strata->labels[s] + "' lacks a treated or a control unit");
    }
    if (cluster && static_cast<Index>(cluster->codes.size()) != n) throw ValidationError("cluster labels length mismatch");
  }
};

namespace detail {

inline bool is_blank(const std::string& s) {
  return s.find_first_not_of(" \t") == std::string::npos;
}

inline std::optional<double> parse_number(const std::string& raw) {
  std::string s = raw;
  s.erase(0, s.find_first_not_of(" \t"));
  s.erase(s.find_last_not_of(" \t") + 1);
  if (s.empty()) return std::nullopt;
  double v = 0.0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) throw ValidationError("non-numeric value '" + raw + "'");
  return v;
}

}  // namespace detail

// Builds a dataset from an already parsed CSV table. Rows with a missing
// outcome or treatment are dropped and counted; covariate gaps become NaN.
inline Dataset from_table(const csv::Table& table, const Schema& schema) {
  auto outcomes = schema.columns_with(Role::outcome);
  auto treatments = schema.columns_with(Role::treatment);
  if (outcomes.size() != 1) throw ConfigError("schema must name exactly one outcome column");
  if (treatments.size() != 1) throw ConfigError("schema must name exactly one treatment column");
  auto clusters = schema.columns_with(Role::cluster);
  auto stratas = schema.columns_with(Role::strata);
  if (clusters.size() > 1 || stratas.size() > 1) throw ConfigError("at most one cluster and one strata column");

  auto col = [&](const std::string& name) {
    auto j = table.column(name);
    if (j < 0) throw ConfigError("column '" + name + "' named in schema is absent from the data");
    return static_cast<std::size_t>(j);
  };
  for (const auto& [name, role] : schema.roles) (void)col(name);

  // Covariates in file order, so output ordering follows the data file.
  std::vector<std::string> cov_names;
  for (const auto& h : table.header) {
    auto it = schema.roles.find(h);
    if (it != schema.roles.end() && it->second == Role::covariate) cov_names.push_back(h);
  }
  for (const auto& a : schema.aggregate)
    if (std::find(cov_names.begin(), cov_names.end(), a) == cov_names.end())
      throw ConfigError("aggregate column '" + a + "' is not a covariate");

  const std::size_t jy = col(outcomes[0]), jd = col(treatments[0]);
  std::vector<std::size_t> jx;
  for (const auto& c : cov_names) jx.push_back(col(c));

  std::vector<std::size_t> keep;
  std::vector<double> y, d;
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    const auto& row = table.rows[i];
    auto dv = detail::parse_number(row[jd]);
    if (dv && *dv != 0.0 && *dv != 1.0)
      throw ValidationError("treatment column '" + treatments[0] + "' contains value '" + row[jd] + "'; expected 0, 1 or empty");
    std::optional<double> yv;
    try {
      yv = detail::parse_number(row[jy]);
    } catch (const ValidationError&) {
      throw ValidationError("outcome column '" + outcomes[0] + "' contains non-numeric value '" + row[jy] + "'");
    }
    if (!dv || !yv) continue;
    keep.push_back(i);
    y.push_back(*yv);
    d.push_back(*dv);
  }

  Dataset ds;
  ds.outcome_name = outcomes[0];
  ds.treatment_name = treatments[0];
  ds.dropped_rows = table.rows.size() - keep.size();
  ds.outcome = Eigen::Map<Vector>(y.data(), static_cast<Index>(y.size()));
  ds.treatment = Eigen::Map<Vector>(d.data(), static_cast<Index>(d.size()));
  ds.covariate_names = cov_names;
  ds.aggregate_columns = schema.aggregate;
  ds.covariates.resize(static_cast<Index>(keep.size()), static_cast<Index>(jx.size()));
  for (std::size_t r = 0; r < keep.size(); ++r) {
    for (std::size_t c = 0; c < jx.size(); ++c) {
      std::optional<double> v;
      try {
        v = detail::parse_number(table.rows[keep[r]][jx[c]]);
      } catch (const ValidationError&) {
        throw ValidationError("covariate '" + cov_names[c] + "' contains non-numeric value '" + table.rows[keep[r]][jx[c]] + "'");
      }
      ds.covariates(static_cast<Index>(r), static_cast<Index>(c)) = v ? *v : std::numeric_limits<double>::quiet_NaN();
    }
  }
  auto categorical = [&](const std::vector<std::string>& names) -> std::optional<Categorical> {
    if (names.empty()) return std::nullopt;
    std::size_t j = col(names[0]);
    std::vector<std::string> raw;
    for (auto i : keep) {
      if (detail::is_blank(table.rows[i][j])) throw ValidationError("column '" + names[0] + "' has an empty label");
      raw.push_back(table.rows[i][j]);
    }
    return encode_categorical(names[0], raw);
  };
  ds.cluster = categorical(clusters);
  ds.strata = categorical(stratas);
  return ds;
}

inline Dataset load_csv(const std::string& path, const Schema& schema) {
  return from_table(csv::read_file(path), schema);
}

inline std::string missing_indicator_name(const std::string& column) { return column + "_missing"; }

// Gaps become zeros; each gapped column gains a 0/1 companion indicator.
inline Dataset dummify_missing(Dataset d) {
  const Index n = d.n_obs();
  std::vector<Index> gapped;
  for (Index j = 0; j < d.covariates.cols(); ++j)
    if (!d.covariates.col(j).allFinite()) gapped.push_back(j);
  if (gapped.empty()) return d;
  Matrix out(n, d.covariates.cols() + static_cast<Index>(gapped.size()));
  out.leftCols(d.covariates.cols()) = d.covariates;
  for (std::size_t g = 0; g < gapped.size(); ++g) {
    const Index j = gapped[g];
    const Index jm = d.covariates.cols() + static_cast<Index>(g);
    for (Index i = 0; i < n; ++i) {
      bool miss = !std::isfinite(out(i, j));
      out(i, jm) = miss ? 1.0 : 0.0;
      if (miss) out(i, j) = 0.0;
    }
    std::string name = missing_indicator_name(d.covariate_names[j]);
    d.covariate_names.push_back(name);
    d.missing_indicators.insert(name);
    if (d.aggregate_columns.count(d.covariate_names[j])) d.aggregate_columns.insert(name);
  }
  d.covariates = std::move(out);
  return d;
}

// Per-column (min, max) for min-max scaling to [0, 1].
struct ScalingMap {
  struct Range {
    double min = 0.0;
    double max = 0.0;
    bool constant() const { return !(max > min); }
    double apply(double x) const { return constant() ? 0.0 : (x - min) / (max - min); }
    double invert(double u) const { return constant() ? min : u * (max - min) + min; }
  };
  std::vector<Range> covariates;
  Range outcome;

  static Range range_of(const auto& v) {
    Range r{std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()};
    for (Index i = 0; i < v.size(); ++i) {
      r.min = std::min(r.min, v(i));
      r.max = std::max(r.max, v(i));
    }
    if (v.size() == 0) r = Range{};
    return r;
  }

  static ScalingMap fit(const Matrix& x, const Vector& y) {
    ScalingMap m;
    for (Index j = 0; j < x.cols(); ++j) m.covariates.push_back(range_of(x.col(j)));
    m.outcome = range_of(y);
    return m;
  }

  Matrix apply_covariates(const Matrix& x) const {
    Matrix out(x.rows(), x.cols());
    for (Index j = 0; j < x.cols(); ++j)
      for (Index i = 0; i < x.rows(); ++i) out(i, j) = covariates[j].apply(x(i, j));
    return out;
  }
  Matrix invert_covariates(const Matrix& u) const {
    Matrix out(u.rows(), u.cols());
    for (Index j = 0; j < u.cols(); ++j)
      for (Index i = 0; i < u.rows(); ++i) out(i, j) = covariates[j].invert(u(i, j));
    return out;
  }
  Vector apply_outcome(const Vector& y) const { return y.unaryExpr([this](double v) { return outcome.apply(v); }); }
  Vector invert_outcome(const Vector& u) const { return u.unaryExpr([this](double v) { return outcome.invert(v); }); }
};

inline std::pair<Dataset, ScalingMap> rescale_unit_interval(Dataset d) {
  ScalingMap m = ScalingMap::fit(d.covariates, d.outcome);
  d.covariates = m.apply_covariates(d.covariates);
  d.outcome = m.apply_outcome(d.outcome);
  return {std::move(d), std::move(m)};
}

enum class PropensityMode { global, per_stratum };

struct PropensityModel {
  PropensityMode mode = PropensityMode::global;
  double global = 0.5;
  std::vector<double> per_stratum;  // indexed by stratum code
  std::vector<int> strata_codes;    // row -> stratum code, per-stratum mode only

  double at(Index row) const { return mode == PropensityMode::global ? global : per_stratum[strata_codes[row]]; }

  Vector values(std::span<const Index> rows) const {
    Vector p(static_cast<Index>(rows.size()));
    for (std::size_t r = 0; r < rows.size(); ++r) p(static_cast<Index>(r)) = at(rows[r]);
    return p;
  }
};

// Share of treated units, globally or per stratum.
inline PropensityModel estimate_propensity(const Dataset& d, PropensityMode mode = PropensityMode::global) {
  PropensityModel m;
  m.mode = mode;
  const Index n = d.n_obs();
  const Index treated = d.treated_count();
  if (n == 0 || treated == 0 || treated == n)
    throw ValidationError("overlap violated: both treatment arms must be non-empty (0 < p < 1)");
  m.global = static_cast<double>(treated) / static_cast<double>(n);
  if (mode == PropensityMode::per_stratum) {
    if (!d.strata) throw ConfigError("per-stratum propensity requires a strata column");
    const int L = d.strata->levels();
    std::vector<double> t(L, 0.0), c(L, 0.0);
    for (Index i = 0; i < n; ++i) (d.treatment(i) == 1.0 ? t : c)[d.strata->codes[i]] += 1.0;
    m.per_stratum.resize(L);
    for (int s = 0; s < L; ++s) {
      if (t[s] == 0.0 || c[s] == 0.0)
        throw ValidationError("overlap violated in stratum '" + d.strata->labels[s] + "'");
      m.per_stratum[s] = t[s] / (t[s] + c[s]);
    }
    m.strata_codes = d.strata->codes;
  }
  return m;
}

struct BalanceRow {
  std::string covariate;
  Index total_obs = 0;
  Index control_obs = 0;
  double control_mean = 0.0;
  double control_sd = 0.0;
  CoefStat difference;  // treatment coefficient
};

// Regresses each covariate on (1, D) with the requested robust variance.
inline std::vector<BalanceRow> balance_table(const Dataset& d, VarianceKind variance, double alpha = 0.05) {
  if (variance == VarianceKind::cr1 && !d.cluster)
    throw ConfigError("cluster-robust balance table requires a cluster column");
  const Index n = d.n_obs();
  DesignSpec spec;
  spec.regressors = d.treatment;
  spec.names = {"treatment"};
  spec.alpha = alpha;
  spec.variance = variance == VarianceKind::cr1 ? VarianceSpec::clustered(d.cluster->codes)
                                                 : VarianceSpec{variance, {}};
  std::vector<BalanceRow> rows;
  for (Index j = 0; j < d.covariates.cols(); ++j) {
    BalanceRow r;
    r.covariate = d.covariate_names[j];
    r.total_obs = n;
    std::vector<double> ctl;
    for (Index i = 0; i < n; ++i)
      if (d.treatment(i) == 0.0) ctl.push_back(d.covariates(i, j));
    r.control_obs = static_cast<Index>(ctl.size());
    r.control_mean = stats::mean(ctl);
    r.control_sd = std::sqrt(stats::sample_variance(ctl));
    WlsFit fit = fit_wls(d.covariates.col(j), spec);
    r.difference = fit.stat("treatment");
    rows.push_back(r);
  }
  return rows;
}

}  // namespace genml
