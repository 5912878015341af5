#pragma once

// Brute-force reference implementations used as ground truth by the test
// suites: dense normal-equation WLS with a literally summed sandwich, and an
// exhaustive root-split search. Deliberately naive; small inputs only.

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "genml/error.hpp"
#include "genml/random_forest.hpp"
#include "genml/regression.hpp"

namespace genml::oracle {

// Gauss-Jordan elimination with partial pivoting.
inline Matrix invert(Matrix a) {
  const Index k = a.rows();
  Matrix inv = Matrix::Identity(k, k);
  for (Index c = 0; c < k; ++c) {
    Index piv = c;
    for (Index r = c + 1; r < k; ++r)
      if (std::fabs(a(r, c)) > std::fabs(a(piv, c))) piv = r;
    if (std::fabs(a(piv, c)) < 1e-300) throw EstimationError("oracle: singular normal matrix");
    a.row(c).swap(a.row(piv));
    inv.row(c).swap(inv.row(piv));
    const double d = a(c, c);
    a.row(c) /= d;
    inv.row(c) /= d;
    for (Index r = 0; r < k; ++r) {
      if (r == c) continue;
      const double f = a(r, c);
      if (f == 0.0) continue;
      a.row(r) -= f * a.row(c);
      inv.row(r) -= f * inv.row(c);
    }
  }
  return inv;
}

struct OracleFit {
  Vector coef;
  Matrix cov;
};

// X is the full design (intercept and dummies included). Empty clusters
// gives HC1; otherwise CR1 over the supplied labels.
inline OracleFit oracle_wls(const Matrix& X, const Vector& y, const Vector& w, const std::vector<int>& clusters = {}) {
  const Index n = X.rows(), k = X.cols();
  Matrix xtwx = Matrix::Zero(k, k);
  Vector xtwy = Vector::Zero(k);
  for (Index i = 0; i < n; ++i)
    for (Index a = 0; a < k; ++a) {
      xtwy(a) += X(i, a) * w(i) * y(i);
      for (Index b = 0; b < k; ++b) xtwx(a, b) += X(i, a) * w(i) * X(i, b);
    }
  const Matrix bread = invert(xtwx);
  OracleFit f;
  f.coef = bread * xtwy;

  std::map<int, Vector> score;
  for (Index i = 0; i < n; ++i) {
    const int g = clusters.empty() ? static_cast<int>(i) : clusters[static_cast<std::size_t>(i)];
    const double e = y(i) - X.row(i).dot(f.coef);
    auto [it, fresh] = score.try_emplace(g, Vector::Zero(k));
    for (Index a = 0; a < k; ++a) it->second(a) += X(i, a) * w(i) * e;
  }
  Matrix meat = Matrix::Zero(k, k);
  for (const auto& [g, s] : score)
    for (Index a = 0; a < k; ++a)
      for (Index b = 0; b < k; ++b) meat(a, b) += s(a) * s(b);
  const double N = static_cast<double>(n), K = static_cast<double>(k), G = static_cast<double>(score.size());
  const double scale = clusters.empty() ? N / (N - K) : G / (G - 1.0) * (N - 1.0) / (N - K);
  f.cov = bread * (scale * meat) * bread;
  return f;
}

struct OracleSplit {
  int feature = -1;  // -1: no admissible split
  double threshold = 0.0;
  double sse = std::numeric_limits<double>::infinity();
};

// Every feature, every midpoint between distinct sorted values; children SSE
// summed by explicit two-pass means. Ties resolved as the forest does.
inline OracleSplit oracle_best_split(const Matrix& X, const Vector& y, int min_leaf = 1) {
  OracleSplit best;
  const Index n = X.rows();
  for (Index j = 0; j < X.cols(); ++j) {
    std::vector<double> v(X.col(j).data(), X.col(j).data() + n);
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
    for (std::size_t t = 0; t + 1 < v.size(); ++t) {
      const double thr = 0.5 * (v[t] + v[t + 1]);
      std::vector<double> left, right;
      for (Index i = 0; i < n; ++i) (X(i, j) <= thr ? left : right).push_back(y(i));
      if (static_cast<int>(left.size()) < min_leaf || static_cast<int>(right.size()) < min_leaf) continue;
      auto sse = [](const std::vector<double>& s) {
        double m = 0.0;
        for (double u : s) m += u;
        m /= static_cast<double>(s.size());
        double acc = 0.0;
        for (double u : s) acc += (u - m) * (u - m);
        return acc;
      };
      const double total = sse(left) + sse(right);
      if (best.feature < 0 || detail::better_split(total, best.sse)) best = {static_cast<int>(j), thr, total};
    }
  }
  return best;
}

}  // namespace genml::oracle
