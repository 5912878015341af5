#pragma once

// Weighted least squares with strata fixed effects and sandwich covariance
// estimators.

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "genml/error.hpp"
#include "genml/stats.hpp"

namespace genml {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

enum class VarianceKind { classical, hc1, cr1 };

struct VarianceSpec {
  VarianceKind kind = VarianceKind::hc1;
  std::vector<int> clusters;  // one label per observation, used by cr1

  static VarianceSpec robust() { return {}; }
  static VarianceSpec classical() { return {VarianceKind::classical, {}}; }
  static VarianceSpec clustered(std::vector<int> ids) { return {VarianceKind::cr1, std::move(ids)}; }
};

enum class FixedEffects { automatic, dummies, absorb };

// Strata with more levels than this are absorbed by within-demeaning when
// FixedEffects::automatic is selected.
inline constexpr std::size_t kAbsorbLevelThreshold = 50;
inline constexpr double kRankTolerance = 1e-10;

struct DesignSpec {
  Matrix regressors;               // n x k, excluding the intercept
  std::vector<std::string> names;  // k names
  bool intercept = true;
  std::vector<int> strata;  // empty: no fixed effects
  FixedEffects fixed_effects = FixedEffects::automatic;
  Vector weights;  // empty: unit weights
  VarianceSpec variance;
  double alpha = 0.05;
  Reference reference = Reference::normal;
  bool drop_collinear = false;  // drop collinear regressors instead of failing
};

struct CoefStat {
  double estimate = 0.0;
  double se = 0.0;
  double stat = 0.0;
  double p_value = 1.0;
  double lower = 0.0;
  double upper = 0.0;
};

inline CoefStat make_coef_stat(double estimate, double se, double alpha, Reference ref, double df) {
  CoefStat s;
  s.estimate = estimate;
  s.se = se;
  if (se > 0.0) {
    s.stat = estimate / se;
  } else {
    s.stat = estimate == 0.0 ? 0.0 : std::copysign(std::numeric_limits<double>::infinity(), estimate);
  }
  s.p_value = stats::two_sided_p(s.stat, ref, df);
  const double c = stats::critical_value(alpha, ref, df);
  s.lower = estimate - c * se;
  s.upper = estimate + c * se;
  return s;
}

struct WlsFit {
  std::vector<std::string> names;  // explicit coefficients (absorbed effects excluded)
  Vector coef;
  Matrix cov;
  Vector residuals;
  Vector fitted;
  double r_squared = std::numeric_limits<double>::quiet_NaN();
  double adj_r_squared = std::numeric_limits<double>::quiet_NaN();
  Index n = 0;
  Index n_params = 0;  // explicit coefficients plus absorbed levels
  bool has_intercept = false;
  Index absorbed_levels = 0;
  std::size_t clusters = 0;
  double alpha = 0.05;
  Reference reference = Reference::normal;
  double df = 0.0;
  std::vector<std::string> dropped;

  Index index_of(const std::string& name) const {
    for (std::size_t j = 0; j < names.size(); ++j)
      if (names[j] == name) return static_cast<Index>(j);
    throw std::out_of_range("no coefficient named '" + name + "'");
  }
  bool has(const std::string& name) const {
    return std::find(names.begin(), names.end(), name) != names.end();
  }
  CoefStat stat(Index j) const { return make_coef_stat(coef(j), std::sqrt(std::max(cov(j, j), 0.0)), alpha, reference, df); }
  CoefStat stat(const std::string& name) const { return stat(index_of(name)); }
};

namespace detail {

// Maps arbitrary integer labels to dense codes 0..L-1 in ascending label order.
inline std::vector<int> dense_codes(const std::vector<int>& labels, int& levels) {
  std::map<int, int> code;
  for (int v : labels) code.emplace(v, 0);
  int next = 0;
  for (auto& kv : code) kv.second = next++;
  levels = next;
  std::vector<int> out(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) out[i] = code[labels[i]];
  return out;
}

inline Index qr_rank(const Matrix& m) {
  if (m.cols() == 0) return 0;
  Eigen::ColPivHouseholderQR<Matrix> qr(m);
  qr.setThreshold(kRankTolerance);
  return qr.rank();
}

}  // namespace detail

// Minimizes sum_i w_i (y_i - x_i'b)^2 and attaches the selected sandwich
// covariance. Normal (or t) reference for p-values and confidence intervals.
inline WlsFit fit_wls(const Vector& y, const DesignSpec& spec) {
  const Index n = y.size();
  if (spec.regressors.rows() != n) throw std::invalid_argument("fit_wls: regressors and outcome differ in length");
  if (static_cast<Index>(spec.names.size()) != spec.regressors.cols())
    throw std::invalid_argument("fit_wls: one name per regressor required");
  if (!spec.strata.empty() && static_cast<Index>(spec.strata.size()) != n)
    throw std::invalid_argument("fit_wls: strata length mismatch");
  if (!y.allFinite() || !spec.regressors.allFinite()) throw EstimationError("fit_wls: non-finite data");

  Vector w = spec.weights.size() ? spec.weights : Vector::Ones(n);
  if (w.size() != n) throw std::invalid_argument("fit_wls: weight length mismatch");
  for (Index i = 0; i < n; ++i)
    if (!(w(i) > 0.0) || !std::isfinite(w(i))) throw EstimationError("fit_wls: weights must be strictly positive");

  int levels = 0;
  std::vector<int> strata;
  if (!spec.strata.empty()) strata = detail::dense_codes(spec.strata, levels);
  bool absorb = false;
  if (levels > 1) {
    absorb = spec.fixed_effects == FixedEffects::absorb ||
             (spec.fixed_effects == FixedEffects::automatic && static_cast<std::size_t>(levels) > kAbsorbLevelThreshold);
  }

  // Candidate columns in order: intercept, regressors, strata dummies.
  std::vector<Vector> cols;
  std::vector<std::string> names;
  bool explicit_intercept = spec.intercept && !absorb;
  if (explicit_intercept) {
    cols.push_back(Vector::Ones(n));
    names.push_back("(intercept)");
  }
  for (Index j = 0; j < spec.regressors.cols(); ++j) {
    cols.push_back(spec.regressors.col(j));
    names.push_back(spec.names[j]);
  }
  if (levels > 1 && !absorb) {
    std::map<int, int> first_label;
    for (std::size_t i = 0; i < strata.size(); ++i) first_label.emplace(strata[i], spec.strata[i]);
    for (int l = spec.intercept ? 1 : 0; l < levels; ++l) {
      Vector d = Vector::Zero(n);
      for (Index i = 0; i < n; ++i) d(i) = strata[i] == l ? 1.0 : 0.0;
      cols.push_back(d);
      names.push_back("stratum[" + std::to_string(first_label[l]) + "]");
    }
  }

  Vector yy = y;
  if (absorb) {
    std::vector<double> sw(levels, 0.0), sy(levels, 0.0);
    for (Index i = 0; i < n; ++i) {
      sw[strata[i]] += w(i);
      sy[strata[i]] += w(i) * y(i);
    }
    for (Index i = 0; i < n; ++i) yy(i) -= sy[strata[i]] / sw[strata[i]];
    for (auto& c : cols) {
      std::vector<double> sc(levels, 0.0);
      for (Index i = 0; i < n; ++i) sc[strata[i]] += w(i) * c(i);
      for (Index i = 0; i < n; ++i) c(i) -= sc[strata[i]] / sw[strata[i]];
    }
  }

  const Vector sqw = w.cwiseSqrt();
  std::vector<std::string> dropped;
  bool needs_pruning = false;
  if (spec.drop_collinear && !cols.empty()) {
    Matrix full(n, static_cast<Index>(cols.size()));
    for (std::size_t j = 0; j < cols.size(); ++j) full.col(static_cast<Index>(j)) = cols[j].cwiseProduct(sqw);
    needs_pruning = detail::qr_rank(full) < full.cols();
  }
  if (needs_pruning) {
    // Greedy in column order so earlier columns are retained.
    std::vector<Vector> kept_cols;
    std::vector<std::string> kept_names;
    Matrix acc(n, 0);
    for (std::size_t j = 0; j < cols.size(); ++j) {
      Matrix trial(n, acc.cols() + 1);
      trial << acc, cols[j].cwiseProduct(sqw);
      if (detail::qr_rank(trial) == trial.cols()) {
        acc = std::move(trial);
        kept_cols.push_back(cols[j]);
        kept_names.push_back(names[j]);
      } else {
        dropped.push_back(names[j]);
      }
    }
    cols = std::move(kept_cols);
    names = std::move(kept_names);
  }

  const Index k = static_cast<Index>(cols.size());
  Matrix X(n, k);
  for (Index j = 0; j < k; ++j) X.col(j) = cols[j];

  WlsFit fit;
  fit.names = names;
  fit.dropped = dropped;
  fit.n = n;
  fit.absorbed_levels = absorb ? levels : 0;
  fit.n_params = k + fit.absorbed_levels;
  fit.has_intercept = spec.intercept;
  fit.alpha = spec.alpha;
  fit.reference = spec.reference;
  if (n <= fit.n_params) throw EstimationError("fit_wls: need more observations than parameters");

  Matrix Xw = sqw.asDiagonal() * X;
  Vector yw = sqw.cwiseProduct(yy);
  Eigen::ColPivHouseholderQR<Matrix> qr(Xw);
  qr.setThreshold(kRankTolerance);
  if (qr.rank() < k) throw EstimationError("fit_wls: design matrix is rank deficient");

  fit.coef = k ? Vector(qr.solve(yw)) : Vector();
  fit.residuals = yy - (k ? Vector(X * fit.coef) : Vector::Zero(n));
  fit.fitted = y - fit.residuals;

  // (X'WX)^{-1} = P R^{-1} R^{-T} P'
  Matrix bread = Matrix::Zero(k, k);
  if (k) {
    Matrix R = qr.matrixR().topLeftCorner(k, k).template triangularView<Eigen::Upper>();
    Matrix Rinv = R.template triangularView<Eigen::Upper>().solve(Matrix::Identity(k, k));
    Matrix inner = Rinv * Rinv.transpose();
    const auto& perm = qr.colsPermutation();
    bread = perm * inner * perm.transpose();
  }

  const double N = static_cast<double>(n);
  const double K = static_cast<double>(fit.n_params);
  Matrix meat = Matrix::Zero(k, k);
  switch (spec.variance.kind) {
    case VarianceKind::classical: {
      double rss = (sqw.cwiseProduct(fit.residuals)).squaredNorm();
      fit.cov = bread * (rss / (N - K));
      fit.df = N - K;
      break;
    }
    case VarianceKind::hc1: {
      for (Index i = 0; i < n; ++i) {
        Vector s = X.row(i).transpose() * (w(i) * fit.residuals(i));
        meat.noalias() += s * s.transpose();
      }
      meat *= N / (N - K);
      fit.cov = bread * meat * bread;
      fit.df = N - K;
      break;
    }
    case VarianceKind::cr1: {
      if (static_cast<Index>(spec.variance.clusters.size()) != n)
        throw std::invalid_argument("fit_wls: cluster labels length mismatch");
      int g = 0;
      std::vector<int> cl = detail::dense_codes(spec.variance.clusters, g);
      if (g < 2) throw EstimationError("fit_wls: cluster-robust variance needs at least 2 clusters");
      Matrix scores = Matrix::Zero(k, g);
      for (Index i = 0; i < n; ++i) scores.col(cl[i]) += X.row(i).transpose() * (w(i) * fit.residuals(i));
      meat = scores * scores.transpose();
      const double G = g;
      meat *= G / (G - 1.0) * (N - 1.0) / (N - K);
      fit.cov = bread * meat * bread;
      fit.clusters = static_cast<std::size_t>(g);
      fit.df = G - 1.0;
      break;
    }
  }
  fit.cov = 0.5 * (fit.cov + fit.cov.transpose()).eval();

  const double sw = w.sum();
  const double rss = (sqw.cwiseProduct(fit.residuals)).squaredNorm();
  if (spec.intercept) {
    const double ybar = w.dot(y) / sw;
    double tss = 0.0;
    for (Index i = 0; i < n; ++i) tss += w(i) * (y(i) - ybar) * (y(i) - ybar);
    fit.r_squared = tss > 0.0 ? 1.0 - rss / tss : (rss == 0.0 ? 1.0 : std::numeric_limits<double>::quiet_NaN());
    const double kk = K - 1.0;
    if (N > kk + 1.0) fit.adj_r_squared = 1.0 - (1.0 - fit.r_squared) * (N - 1.0) / (N - kk - 1.0);
  } else {
    double tss = 0.0;
    for (Index i = 0; i < n; ++i) tss += w(i) * y(i) * y(i);
    fit.r_squared = tss > 0.0 ? 1.0 - rss / tss : 1.0;
  }
  return fit;
}

// Wald test of c'b = 0 using the fit's covariance.
inline CoefStat linear_combination_test(const WlsFit& fit, const Vector& c) {
  if (c.size() != fit.coef.size()) throw std::invalid_argument("linear_combination_test: weight length mismatch");
  const double est = c.dot(fit.coef);
  const double var = c.dot(fit.cov * c);
  return make_coef_stat(est, std::sqrt(std::max(var, 0.0)), fit.alpha, fit.reference, fit.df);
}

inline CoefStat linear_combination_test(const WlsFit& fit, const std::vector<std::pair<std::string, double>>& terms) {
  Vector c = Vector::Zero(fit.coef.size());
  for (const auto& [name, weight] : terms) c(fit.index_of(name)) += weight;
  return linear_combination_test(fit, c);
}

inline double adjusted_r_squared(double r2, double n, double k) {
  if (n <= k + 1.0) throw EstimationError("adjusted R^2 undefined: n <= k + 1");
  return 1.0 - (1.0 - r2) * (n - 1.0) / (n - k - 1.0);
}

// k counts every non-intercept parameter, including absorbed strata effects.
inline double adjusted_r_squared(const WlsFit& fit) {
  if (!fit.has_intercept) throw EstimationError("adjusted R^2 requires an intercept");
  return adjusted_r_squared(fit.r_squared, static_cast<double>(fit.n), static_cast<double>(fit.n_params - 1));
}

}  // namespace genml
