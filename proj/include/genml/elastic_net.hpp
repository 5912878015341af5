#pragma once

// Elastic Net by cyclic coordinate descent on
//
//   L(l1, l2, theta) = ||y - a - X theta||^2 + l2 ||theta||^2 + l1 ||theta||_1
//
// with an unpenalized intercept a and no 1/(2n) normalization. The optional
// debias step rescales the slopes by (1 + l2).

#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "genml/error.hpp"
#include "genml/random.hpp"
#include "genml/regression.hpp"

namespace genml {

struct ElasticNetOptions {
  double tolerance = 1e-7;  // max absolute coordinate update
  int max_sweeps = 10000;
};

struct ElasticNetModel {
  Vector coef;  // slopes
  double intercept = 0.0;
  double lambda1 = 0.0;
  double lambda2 = 0.0;
  bool debias = true;
  int iterations = 0;
  double max_change = 0.0;
  bool converged = false;

  Vector predict(const Matrix& x) const {
    if (x.cols() != coef.size()) throw std::invalid_argument("elastic net: column count mismatch");
    return (x * coef).array() + intercept;
  }
};

inline double soft_threshold(double z, double t) {
  if (z > t) return z - t;
  if (z < -t) return z + t;
  return 0.0;
}

// L(l1, l2, theta) evaluated with the least-squares intercept for theta.
inline double elastic_net_objective(const Matrix& x, const Vector& y, const Vector& theta, double l1, double l2) {
  Vector r = y - x * theta;
  r.array() -= r.mean();
  return r.squaredNorm() + l2 * theta.squaredNorm() + l1 * theta.lpNorm<1>();
}

namespace detail {

// Centered Gram system shared by all penalty pairs fitted on the same rows.
struct CoordinateDescentProblem {
  Vector x_mean;
  double y_mean = 0.0;
  Matrix gram;  // Xc'Xc
  Vector xty;   // Xc'yc

  CoordinateDescentProblem(const Matrix& x, const Vector& y) {
    if (x.rows() != y.size()) throw std::invalid_argument("elastic net: X and y differ in rows");
    if (x.rows() == 0) throw EstimationError("elastic net: no observations");
    if (!x.allFinite() || !y.allFinite()) throw EstimationError("elastic net: non-finite input");
    x_mean = x.colwise().mean().transpose();
    y_mean = y.mean();
    Matrix xc = x.rowwise() - x_mean.transpose();
    gram.noalias() = xc.transpose() * xc;
    xty.noalias() = xc.transpose() * (y.array() - y_mean).matrix();
  }

  ElasticNetModel solve(double l1, double l2, bool debias, const ElasticNetOptions& opt) const {
    if (!(l1 >= 0.0) || !(l2 >= 0.0) || !std::isfinite(l1) || !std::isfinite(l2))
      throw std::invalid_argument("elastic net: penalties must be finite and non-negative");
    const Index p = gram.cols();
    ElasticNetModel m;
    m.lambda1 = l1;
    m.lambda2 = l2;
    m.debias = debias;
    m.coef = Vector::Zero(p);
    Vector grad = xty;  // xty - gram * coef
    for (m.iterations = 0; m.iterations < opt.max_sweeps;) {
      ++m.iterations;
      double max_change = 0.0;
      for (Index j = 0; j < p; ++j) {
        const double denom = gram(j, j) + l2;
        const double old = m.coef(j);
        double upd = 0.0;
        if (denom > 0.0) upd = soft_threshold(grad(j) + gram(j, j) * old, 0.5 * l1) / denom;
        const double delta = upd - old;
        if (delta != 0.0) {
          m.coef(j) = upd;
          grad.noalias() -= gram.col(j) * delta;
          max_change = std::max(max_change, std::fabs(delta));
        }
      }
      m.max_change = max_change;
      if (max_change < opt.tolerance) {
        m.converged = true;
        break;
      }
    }
    if (debias) m.coef *= (1.0 + l2);
    m.intercept = y_mean - x_mean.dot(m.coef);
    return m;
  }
};

}  // namespace detail

inline ElasticNetModel fit_elastic_net(const Matrix& x, const Vector& y, double lambda1, double lambda2, bool debias,
                                       const ElasticNetOptions& opt = {}) {
  return detail::CoordinateDescentProblem(x, y).solve(lambda1, lambda2, debias, opt);
}

struct TuningPlan {
  int folds = 2;
  int repeats = 2;
  int candidates = 20;
  double lambda1_min = 1e-4, lambda1_max = 1e1;
  double lambda2_min = 1e-4, lambda2_max = 1e1;
  bool debias = true;
  std::uint64_t seed = 0;
};

struct PenaltyPair {
  double lambda1 = 0.0;
  double lambda2 = 0.0;
};

// Candidates drawn log-uniformly from the plan's ranges.
inline std::vector<PenaltyPair> random_grid(const TuningPlan& plan) {
  Rng rng(derive_seed(plan.seed, {0x67726964ULL}));
  auto draw = [&](double lo, double hi) {
    return std::exp(std::log(lo) + uniform01(rng) * (std::log(hi) - std::log(lo)));
  };
  std::vector<PenaltyPair> grid;
  for (int c = 0; c < plan.candidates; ++c) {
    PenaltyPair pp;
    pp.lambda1 = draw(plan.lambda1_min, plan.lambda1_max);
    pp.lambda2 = draw(plan.lambda2_min, plan.lambda2_max);
    grid.push_back(pp);
  }
  return grid;
}

// Fold label per row for one repeat: a seeded permutation dealt round-robin.
inline std::vector<int> fold_labels(Index n, int folds, std::uint64_t seed, int repeat) {
  std::vector<Index> perm(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) perm[static_cast<std::size_t>(i)] = i;
  Rng rng(derive_seed(seed, {0x666f6c64ULL, static_cast<std::uint64_t>(repeat)}));
  shuffle(perm, rng);
  std::vector<int> label(static_cast<std::size_t>(n));
  for (std::size_t pos = 0; pos < perm.size(); ++pos) label[static_cast<std::size_t>(perm[pos])] = static_cast<int>(pos % folds);
  return label;
}

struct TuningResult {
  PenaltyPair best;
  double best_cv_mse = std::numeric_limits<double>::infinity();
  std::vector<PenaltyPair> grid;
  std::vector<double> cv_mse;  // per candidate; +inf when never evaluated
  ElasticNetModel model;
  std::vector<std::string> warnings;
};

inline Matrix take_rows(const Matrix& x, const std::vector<Index>& rows) {
  Matrix out(static_cast<Index>(rows.size()), x.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) out.row(static_cast<Index>(r)) = x.row(rows[r]);
  return out;
}

inline Vector take(const Vector& v, const std::vector<Index>& rows) {
  Vector out(static_cast<Index>(rows.size()));
  for (std::size_t r = 0; r < rows.size(); ++r) out(static_cast<Index>(r)) = v(rows[r]);
  return out;
}

// Repeated k-fold cross-validation over a random penalty grid; refits the
// winner on all rows.
inline TuningResult tune_elastic_net(const Matrix& x, const Vector& y, const TuningPlan& plan,
                                     const ElasticNetOptions& opt = {}) {
  const Index n = x.rows();
  if (plan.folds < 2 || plan.repeats < 1 || plan.candidates < 1) throw ConfigError("tuning plan needs folds >= 2, repeats >= 1, candidates >= 1");
  if (n < 2 * plan.folds) throw EstimationError("elastic net tuning: need n >= 2k rows");
  TuningResult res;
  res.grid = random_grid(plan);
  const std::size_t C = res.grid.size();
  std::vector<double> sse(C, 0.0);
  std::vector<Index> counted(C, 0);

  for (int r = 0; r < plan.repeats; ++r) {
    auto labels = fold_labels(n, plan.folds, plan.seed, r);
    for (int f = 0; f < plan.folds; ++f) {
      std::vector<Index> train, valid;
      for (Index i = 0; i < n; ++i) (labels[static_cast<std::size_t>(i)] == f ? valid : train).push_back(i);
      Matrix xt = take_rows(x, train), xv = take_rows(x, valid);
      Vector yt = take(y, train), yv = take(y, valid);
      if ((yt.array() == yt(0)).all()) {
        res.warnings.push_back("repeat " + std::to_string(r) + " fold " + std::to_string(f) +
                               ": constant training outcome, fold skipped");
        continue;
      }
      detail::CoordinateDescentProblem prob(xt, yt);
      for (std::size_t c = 0; c < C; ++c) {
        ElasticNetModel m = prob.solve(res.grid[c].lambda1, res.grid[c].lambda2, plan.debias, opt);
        if (!m.converged) {
          res.warnings.push_back("candidate " + std::to_string(c) + " did not converge on a fold");
          continue;
        }
        sse[c] += (yv - m.predict(xv)).squaredNorm();
        counted[c] += static_cast<Index>(valid.size());
      }
    }
  }
  res.cv_mse.assign(C, std::numeric_limits<double>::infinity());
  std::ptrdiff_t best = -1;
  for (std::size_t c = 0; c < C; ++c) {
    if (counted[c] == 0) continue;
    res.cv_mse[c] = sse[c] / static_cast<double>(counted[c]);
    if (best < 0 || res.cv_mse[c] < res.cv_mse[static_cast<std::size_t>(best)]) best = static_cast<std::ptrdiff_t>(c);
  }
  if (best < 0) {
    // Every fold was degenerate; fall back to the strongest penalty.
    res.warnings.push_back("no candidate could be evaluated; using the largest penalties");
    res.best = {plan.lambda1_max, plan.lambda2_max};
  } else {
    res.best = res.grid[static_cast<std::size_t>(best)];
    res.best_cv_mse = res.cv_mse[static_cast<std::size_t>(best)];
  }
  res.model = fit_elastic_net(x, y, res.best.lambda1, res.best.lambda2, plan.debias, opt);
  return res;
}

}  // namespace genml
