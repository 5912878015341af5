#pragma once

// Regression forest: bootstrap-aggregated CART trees grown by recursive
// binary splitting over random feature subsets.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <thread>
#include <vector>

#include <Eigen/Dense>

#include "genml/random.hpp"
#include "genml/regression.hpp"

namespace genml {

struct TreeParams {
  int mtry = 0;       // 0: max(1, floor(p / 3))
  int min_leaf = 5;   // minimum rows in each child
  int max_depth = 0;  // 0: unlimited
};

inline int resolve_mtry(int mtry, Index p) {
  if (mtry > 0) return static_cast<int>(std::min<Index>(mtry, p));
  return static_cast<int>(std::max<Index>(1, p / 3));
}

struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  double value = 0.0;  // mean target of rows routed here
  Index count = 0;
};

class RegressionTree {
 public:
  RegressionTree() = default;
  explicit RegressionTree(std::vector<TreeNode> nodes) : nodes_(std::move(nodes)) {}

  const std::vector<TreeNode>& nodes() const { return nodes_; }

  // Index of the leaf that x falls into; x <= threshold goes left.
  int leaf_of(const double* x, Index stride) const {
    int k = 0;
    while (nodes_[k].feature >= 0) {
      const TreeNode& nd = nodes_[k];
      k = x[nd.feature * stride] <= nd.threshold ? nd.left : nd.right;
    }
    return k;
  }
  double predict_row(const Matrix& x, Index row) const {
    return nodes_[leaf_of(x.data() + row, x.rows())].value;
  }
  Vector predict(const Matrix& x) const {
    Vector out(x.rows());
    for (Index i = 0; i < x.rows(); ++i) out(i) = predict_row(x, i);
    return out;
  }
  std::size_t leaf_count() const {
    return static_cast<std::size_t>(std::count_if(nodes_.begin(), nodes_.end(), [](const TreeNode& n) { return n.feature < 0; }));
  }

 private:
  std::vector<TreeNode> nodes_;
};

struct SplitCandidate {
  int feature = -1;
  double threshold = 0.0;
  double sse = 0.0;  // summed squared deviations of both children
};

namespace detail {

// Relative slack under which two split qualities count as tied; ties keep
// the earlier (lower feature, lower threshold) candidate.
inline constexpr double kSplitTieTolerance = 1e-12;

inline bool better_split(double candidate, double incumbent) {
  return candidate < incumbent - kSplitTieTolerance * std::max(1.0, std::fabs(incumbent));
}

// Best threshold on one feature over rows, scanning midpoints between
// consecutive distinct values; both children need >= min_leaf rows.
inline void scan_feature(const Matrix& x, const Vector& y, std::span<const Index> rows, int feature, int min_leaf,
                         std::vector<std::pair<double, double>>& buf, SplitCandidate& best) {
  buf.clear();
  for (Index r : rows) buf.emplace_back(x(r, feature), y(r));
  std::sort(buf.begin(), buf.end());
  const std::size_t m = buf.size();
  double total = 0.0, total_sq = 0.0;
  for (const auto& [v, t] : buf) {
    total += t;
    total_sq += t * t;
  }
  double left = 0.0;
  for (std::size_t i = 0; i + 1 < m; ++i) {
    left += buf[i].second;
    if (buf[i].first == buf[i + 1].first) continue;
    const std::size_t nl = i + 1, nr = m - nl;
    if (nl < static_cast<std::size_t>(min_leaf) || nr < static_cast<std::size_t>(min_leaf)) continue;
    const double right = total - left;
    const double sse = total_sq - left * left / static_cast<double>(nl) - right * right / static_cast<double>(nr);
    if (best.feature < 0 || better_split(sse, best.sse)) {
      double thr = 0.5 * (buf[i].first + buf[i + 1].first);
      if (!(thr < buf[i + 1].first)) thr = buf[i].first;
      best = {feature, thr, sse};
    }
  }
}

}  // namespace detail

// Grows one tree on the given rows (duplicates allowed, as in a bootstrap
// sample).
inline RegressionTree fit_tree(const Matrix& x, const Vector& y, std::vector<Index> rows, const TreeParams& params,
                               Rng& rng) {
  if (rows.empty()) throw std::invalid_argument("fit_tree: no rows");
  const Index p = x.cols();
  const int mtry = resolve_mtry(params.mtry, p);
  const int min_leaf = std::max(1, params.min_leaf);
  std::vector<TreeNode> nodes;
  struct Pending {
    int node;
    std::size_t begin, end;
    int depth;
  };
  std::vector<Pending> stack;
  nodes.emplace_back();
  stack.push_back({0, 0, rows.size(), 0});
  std::vector<int> features(static_cast<std::size_t>(p));
  std::vector<std::pair<double, double>> buf;
  buf.reserve(rows.size());

  // Depth-first with left child processed first, so node numbering and RNG
  // consumption depend only on the tree's shape.
  while (!stack.empty()) {
    Pending job = stack.back();
    stack.pop_back();
    std::span<Index> span(rows.data() + job.begin, job.end - job.begin);
    double sum = 0.0;
    bool pure = true;
    const double first = y(span[0]);
    for (Index r : span) {
      sum += y(r);
      pure = pure && y(r) == first;
    }
    TreeNode& nd = nodes[static_cast<std::size_t>(job.node)];
    nd.count = static_cast<Index>(span.size());
    nd.value = sum / static_cast<double>(span.size());
    const bool depth_ok = params.max_depth <= 0 || job.depth < params.max_depth;
    if (pure || !depth_ok || span.size() < 2 * static_cast<std::size_t>(min_leaf)) continue;

    std::iota(features.begin(), features.end(), 0);
    for (int k = 0; k < mtry; ++k) {
      auto j = static_cast<std::size_t>(k) + uniform_index(rng, static_cast<std::uint64_t>(p - k));
      std::swap(features[static_cast<std::size_t>(k)], features[j]);
    }
    std::sort(features.begin(), features.begin() + mtry);
    SplitCandidate best;
    for (int k = 0; k < mtry; ++k) detail::scan_feature(x, y, span, features[static_cast<std::size_t>(k)], min_leaf, buf, best);
    if (best.feature < 0) continue;

    auto mid = std::stable_partition(span.begin(), span.end(),
                                     [&](Index r) { return x(r, best.feature) <= best.threshold; });
    const std::size_t split = job.begin + static_cast<std::size_t>(mid - span.begin());
    const int left = static_cast<int>(nodes.size());
    nodes.emplace_back();
    nodes.emplace_back();
    TreeNode& parent = nodes[static_cast<std::size_t>(job.node)];
    parent.feature = best.feature;
    parent.threshold = best.threshold;
    parent.left = left;
    parent.right = left + 1;
    stack.push_back({left + 1, split, job.end, job.depth + 1});
    stack.push_back({left, job.begin, split, job.depth + 1});
  }
  return RegressionTree(std::move(nodes));
}

inline RegressionTree fit_tree(const Matrix& x, const Vector& y, const TreeParams& params, Rng& rng) {
  std::vector<Index> rows(static_cast<std::size_t>(x.rows()));
  std::iota(rows.begin(), rows.end(), Index{0});
  return fit_tree(x, y, std::move(rows), params, rng);
}

struct ForestParams {
  int trees = 1000;
  TreeParams tree;
  bool bootstrap = true;
  std::uint64_t seed = 0;
  int threads = 1;
};

class ForestModel {
 public:
  ForestModel() = default;
  ForestModel(std::vector<RegressionTree> trees, Index n_features, ForestParams params)
      : trees_(std::move(trees)), n_features_(n_features), params_(params) {}

  const std::vector<RegressionTree>& trees() const { return trees_; }
  const ForestParams& params() const { return params_; }
  Index n_features() const { return n_features_; }

  // Per-row mean over trees, accumulated in tree order.
  Vector predict(const Matrix& x) const {
    if (x.cols() != n_features_) throw std::invalid_argument("forest: column count mismatch");
    Vector out = Vector::Zero(x.rows());
    for (const auto& t : trees_)
      for (Index i = 0; i < x.rows(); ++i) out(i) += t.predict_row(x, i);
    return out / static_cast<double>(trees_.size());
  }

 private:
  std::vector<RegressionTree> trees_;
  Index n_features_ = 0;
  ForestParams params_;
};

inline ForestModel fit_forest(const Matrix& x, const Vector& y, const ForestParams& params) {
  if (params.trees < 1) throw std::invalid_argument("fit_forest: need at least one tree");
  if (x.rows() != y.size() || x.rows() == 0) throw std::invalid_argument("fit_forest: bad dimensions");
  if (!x.allFinite() || !y.allFinite()) throw EstimationError("fit_forest: non-finite input");
  const auto n = static_cast<std::uint64_t>(x.rows());
  std::vector<RegressionTree> trees(static_cast<std::size_t>(params.trees));
  auto grow = [&](int b) {
    Rng rng(derive_seed(params.seed, {static_cast<std::uint64_t>(b)}));
    std::vector<Index> rows(n);
    if (params.bootstrap) {
      for (auto& r : rows) r = static_cast<Index>(uniform_index(rng, n));
    } else {
      std::iota(rows.begin(), rows.end(), Index{0});
    }
    trees[static_cast<std::size_t>(b)] = fit_tree(x, y, std::move(rows), params.tree, rng);
  };
  const int threads = std::max(1, std::min(params.threads, params.trees));
  if (threads == 1) {
    for (int b = 0; b < params.trees; ++b) grow(b);
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t)
      pool.emplace_back([&, t] {
        for (int b = t; b < params.trees; b += threads) grow(b);
      });
    for (auto& th : pool) th.join();
  }
  return ForestModel(std::move(trees), x.cols(), params);
}

inline Vector predict_forest(const ForestModel& m, const Matrix& x) { return m.predict(x); }

}  // namespace genml
