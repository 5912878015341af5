#include <random>

#include <gtest/gtest.h>

#include "genml/elastic_net.hpp"
#include "genml/random.hpp"

using namespace genml;

namespace {

struct Instance {
  Matrix x;
  Vector y;
};

Instance random_instance(std::uint64_t seed, Index n, Index p, const Vector& beta, double noise) {
  Rng rng(seed);
  std::normal_distribution<double> normal;
  Instance in{Matrix(n, p), Vector(n)};
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < p; ++j) in.x(i, j) = uniform01(rng);
  in.y = in.x * beta;
  for (Index i = 0; i < n; ++i) in.y(i) += 0.7 + noise * normal(rng);
  return in;
}

Vector ols_slopes(const Matrix& x, const Vector& y) {
  Matrix xc = x.rowwise() - x.colwise().mean();
  Vector yc = y.array() - y.mean();
  return xc.colPivHouseholderQr().solve(yc);
}

}  // namespace

TEST(ElasticNet, NoPenaltyIsOls) {
  auto in = random_instance(1, 200, 5, Vector::LinSpaced(5, -1, 1), 0.5);
  auto m = fit_elastic_net(in.x, in.y, 0.0, 0.0, false);
  ASSERT_TRUE(m.converged);
  EXPECT_LT((m.coef - ols_slopes(in.x, in.y)).cwiseAbs().maxCoeff(), 1e-6);
  Vector resid = in.y - m.predict(in.x);
  EXPECT_NEAR(resid.mean(), 0.0, 1e-10);
}

TEST(ElasticNet, HugeL1ZeroesEverySlope) {
  auto in = random_instance(2, 100, 6, Vector::Ones(6), 0.1);
  auto m = fit_elastic_net(in.x, in.y, 1e6, 0.0, false);
  for (Index j = 0; j < m.coef.size(); ++j) EXPECT_EQ(m.coef(j), 0.0);
  EXPECT_NEAR(m.intercept, in.y.mean(), 1e-12);
}

TEST(ElasticNet, RidgeClosedForm) {
  auto in = random_instance(3, 150, 4, Vector::LinSpaced(4, 1, 2), 0.3);
  auto m = fit_elastic_net(in.x, in.y, 0.0, 0.5, false);
  Matrix xc = in.x.rowwise() - in.x.colwise().mean();
  Vector yc = in.y.array() - in.y.mean();
  Matrix a = xc.transpose() * xc + 0.5 * Matrix::Identity(4, 4);
  Vector ridge = a.ldlt().solve(xc.transpose() * yc);
  EXPECT_LT((m.coef - ridge).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(ElasticNet, DebiasScalesSlopes) {
  auto in = random_instance(4, 120, 3, Vector::Ones(3), 0.3);
  auto raw = fit_elastic_net(in.x, in.y, 0.2, 0.4, false);
  auto deb = fit_elastic_net(in.x, in.y, 0.2, 0.4, true);
  EXPECT_LT((deb.coef - 1.4 * raw.coef).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_NEAR(deb.intercept, in.y.mean() - in.x.colwise().mean().dot(deb.coef), 1e-12);
}

TEST(ElasticNet, OrthonormalSoftThreshold) {
  // Orthonormal centered columns from a QR of a centered random matrix.
  Rng rng(5);
  std::normal_distribution<double> normal;
  Matrix z(64, 4);
  for (Index i = 0; i < z.size(); ++i) z.data()[i] = normal(rng);
  z = z.rowwise() - z.colwise().mean();
  Matrix q = Eigen::HouseholderQR<Matrix>(z).householderQ() * Matrix::Identity(64, 4);
  Vector y(64);
  for (Index i = 0; i < 64; ++i) y(i) = 3 * q(i, 0) - 0.4 * q(i, 1) + 0.05 * normal(rng);
  const Vector b = ols_slopes(q, y);
  for (double l1 : {0.1, 0.5, 1.0, 3.0}) {
    auto m = fit_elastic_net(q, y, l1, 0.0, false);
    for (Index j = 0; j < 4; ++j) {
      const double expect = std::copysign(std::max(std::fabs(b(j)) - l1 / 2.0, 0.0), b(j));
      EXPECT_NEAR(m.coef(j), expect, 1e-6);
    }
  }
}

TEST(ElasticNet, L1NormMonotoneInLambda1) {
  auto in = random_instance(6, 200, 8, Vector::LinSpaced(8, -2, 2), 0.5);
  double prev = std::numeric_limits<double>::infinity();
  for (int k = 0; k < 20; ++k) {
    const double l1 = 1e-3 * std::pow(10.0, k * 5.0 / 19.0);
    auto m = fit_elastic_net(in.x, in.y, l1, 0.1, false);
    const double norm = m.coef.lpNorm<1>();
    EXPECT_LE(norm, prev + 1e-9);
    prev = norm;
  }
}

TEST(ElasticNet, DescentProperty) {
  auto in = random_instance(7, 100, 6, Vector::LinSpaced(6, 0, 1), 1.0);
  for (double l1 : {0.01, 0.5, 5.0})
    for (double l2 : {0.0, 0.1, 2.0}) {
      auto m = fit_elastic_net(in.x, in.y, l1, l2, false);
      const double at_fit = elastic_net_objective(in.x, in.y, m.coef, l1, l2);
      EXPECT_LE(at_fit, elastic_net_objective(in.x, in.y, ols_slopes(in.x, in.y), l1, l2) + 1e-8);
      EXPECT_LE(at_fit, elastic_net_objective(in.x, in.y, Vector::Zero(6), l1, l2) + 1e-8);
    }
}

TEST(ElasticNet, FixedPointOfCoordinateUpdate) {
  auto in = random_instance(8, 150, 5, Vector::LinSpaced(5, -1, 1), 0.5);
  const double l1 = 0.8, l2 = 0.3;
  auto m = fit_elastic_net(in.x, in.y, l1, l2, false);
  Matrix xc = in.x.rowwise() - in.x.colwise().mean();
  Vector yc = in.y.array() - in.y.mean();
  Matrix g = xc.transpose() * xc;
  Vector r = xc.transpose() * yc - g * m.coef;
  for (Index j = 0; j < 5; ++j) {
    const double upd = soft_threshold(r(j) + g(j, j) * m.coef(j), l1 / 2) / (g(j, j) + l2);
    EXPECT_NEAR(upd, m.coef(j), 1e-6);
  }
}

TEST(ElasticNet, NonFiniteInputRejected) {
  Matrix x = Matrix::Ones(4, 2);
  x(1, 1) = std::nan("");
  EXPECT_THROW(fit_elastic_net(x, Vector::Ones(4), 0.1, 0.1, true), EstimationError);
}

TEST(ElasticNet, NonConvergenceIsReported) {
  auto in = random_instance(9, 50, 5, Vector::Ones(5), 1.0);
  ElasticNetOptions opt;
  opt.max_sweeps = 1;
  opt.tolerance = 1e-15;
  auto m = fit_elastic_net(in.x, in.y, 0.0, 0.0, false, opt);
  EXPECT_FALSE(m.converged);
  EXPECT_EQ(m.iterations, 1);
  EXPECT_GT(m.max_change, 0.0);
}

TEST(Tuning, FoldsPartitionRows) {
  for (int rep = 0; rep < 2; ++rep) {
    auto labels = fold_labels(11, 2, 42, rep);
    ASSERT_EQ(labels.size(), 11u);
    int c0 = 0;
    for (int l : labels) {
      ASSERT_TRUE(l == 0 || l == 1);
      c0 += l == 0;
    }
    EXPECT_LE(std::abs(c0 - (11 - c0)), 1);
  }
}

TEST(Tuning, GridIsLogUniformInRange) {
  TuningPlan plan;
  plan.seed = 3;
  auto grid = random_grid(plan);
  ASSERT_EQ(grid.size(), 20u);
  for (const auto& g : grid) {
    EXPECT_GE(g.lambda1, 1e-4);
    EXPECT_LE(g.lambda1, 10.0);
    EXPECT_GE(g.lambda2, 1e-4);
    EXPECT_LE(g.lambda2, 10.0);
  }
}

TEST(Tuning, DeterministicGivenSeed) {
  auto in = random_instance(10, 120, 6, Vector::LinSpaced(6, 0, 1), 0.5);
  TuningPlan plan;
  plan.seed = 99;
  auto a = tune_elastic_net(in.x, in.y, plan);
  auto b = tune_elastic_net(in.x, in.y, plan);
  EXPECT_EQ(a.best.lambda1, b.best.lambda1);
  EXPECT_EQ(a.best.lambda2, b.best.lambda2);
  EXPECT_EQ(a.model.coef, b.model.coef);
  EXPECT_EQ(a.cv_mse.size(), a.grid.size());
}

TEST(Tuning, SparseSignalBeatsOlsOutOfFold) {
  int wins = 0, positive_l1 = 0;
  for (int rep = 0; rep < 20; ++rep) {
    Vector beta = Vector::Zero(30);
    beta(0) = 2.0;
    beta(1) = -1.5;
    auto in = random_instance(100 + static_cast<std::uint64_t>(rep), 80, 30, beta, 1.0);
    TuningPlan plan;
    plan.seed = static_cast<std::uint64_t>(rep);
    auto res = tune_elastic_net(in.x, in.y, plan);
    positive_l1 += res.best.lambda1 > 0.0;
    // Out-of-fold MSE of OLS on the same folds.
    double ols_mse = 0.0;
    for (int r = 0; r < plan.repeats; ++r) {
      auto labels = fold_labels(in.x.rows(), plan.folds, plan.seed, r);
      for (int f = 0; f < plan.folds; ++f) {
        std::vector<Index> tr, te;
        for (Index i = 0; i < in.x.rows(); ++i) (labels[static_cast<std::size_t>(i)] == f ? te : tr).push_back(i);
        Matrix xt = take_rows(in.x, tr);
        Vector yt = take(in.y, tr);
        auto ols = fit_elastic_net(xt, yt, 0.0, 0.0, false);
        Vector e = take(in.y, te) - ols.predict(take_rows(in.x, te));
        ols_mse += e.squaredNorm() / static_cast<double>(te.size());
      }
    }
    ols_mse /= plan.repeats * plan.folds;
    wins += res.best_cv_mse <= ols_mse;
  }
  EXPECT_EQ(positive_l1, 20);
  EXPECT_EQ(wins, 20);
}

TEST(Tuning, PureNoiseSelectsSparseModels) {
  int sparse = 0;
  const int reps = 20;
  for (int rep = 0; rep < reps; ++rep) {
    auto in = random_instance(200 + static_cast<std::uint64_t>(rep), 100, 10, Vector::Zero(10), 1.0);
    TuningPlan plan;
    plan.seed = static_cast<std::uint64_t>(rep);
    auto res = tune_elastic_net(in.x, in.y, plan);
    int zeros = 0;
    for (Index j = 0; j < res.model.coef.size(); ++j) zeros += res.model.coef(j) == 0.0;
    sparse += zeros * 2 >= res.model.coef.size();
  }
  EXPECT_GE(sparse, static_cast<int>(0.8 * reps));
}

TEST(Tuning, ConstantFoldIsSkippedWithWarning) {
  Matrix x(8, 2);
  for (Index i = 0; i < 8; ++i) {
    x(i, 0) = static_cast<double>(i);
    x(i, 1) = static_cast<double>(i * i % 5);
  }
  Vector y = Vector::Constant(8, 3.0);
  TuningPlan plan;
  plan.seed = 1;
  auto res = tune_elastic_net(x, y, plan);
  EXPECT_FALSE(res.warnings.empty());
  EXPECT_NEAR(res.model.predict(x)(0), 3.0, 1e-12);
}
