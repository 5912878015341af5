#include <random>

#include <gtest/gtest.h>

#include "genml/inference.hpp"
#include "genml/synth.hpp"

using namespace genml;

namespace {

std::vector<SplitEstimate> with_p(std::initializer_list<double> ps) {
  std::vector<SplitEstimate> v;
  for (double p : ps) v.push_back({0.0, -1.0, 1.0, p, false});
  return v;
}

synth::DgpSpec hetero(std::uint64_t seed, Index n = 400) {
  synth::DgpSpec g;
  g.n = n;
  g.p = 4;
  g.effect = synth::Effect::linear;
  g.effect_level = 1.0;
  g.effect_scale = 2.0;
  g.seed = seed;
  return g;
}

ForestParams small_forest() {
  ForestParams fp;
  fp.trees = 50;
  return fp;
}

void expect_same(const AggregatedEstimate& a, const AggregatedEstimate& b) {
  EXPECT_EQ(a.point, b.point);
  EXPECT_EQ(a.lower, b.lower);
  EXPECT_EQ(a.upper, b.upper);
  EXPECT_EQ(a.p_adjusted, b.p_adjusted);
}

}  // namespace

TEST(Aggregate, DoubledMedianPValue) {
  EXPECT_NEAR(aggregate_splits(with_p({0.01, 0.02, 0.03})).p_adjusted, 0.04, 1e-15);
  EXPECT_EQ(aggregate_splits(with_p({0.6, 0.7, 0.8})).p_adjusted, 1.0);
  EXPECT_NEAR(aggregate_splits(with_p({0.01, 0.02, 0.03, 0.5})).p_adjusted, 0.05, 1e-15);
}

TEST(Aggregate, ComponentwiseMedianBounds) {
  std::vector<SplitEstimate> v{{1, 0, 2, 0.1, false}, {2, 1, 3, 0.1, false}, {3, 2, 4, 0.1, false}};
  auto a = aggregate_splits(v, 0.05);
  EXPECT_EQ(a.point, 2.0);
  EXPECT_EQ(a.lower, 1.0);
  EXPECT_EQ(a.upper, 3.0);
  EXPECT_DOUBLE_EQ(a.split_level, 0.95);
  EXPECT_DOUBLE_EQ(a.reported_level, 0.90);
  EXPECT_EQ(a.splits, 3u);
}

TEST(Aggregate, SingleSplitPassesThrough) {
  std::vector<SplitEstimate> v{{0.7, 0.2, 1.1, 0.3, false}};
  auto a = aggregate_splits(v);
  EXPECT_EQ(a.point, 0.7);
  EXPECT_EQ(a.lower, 0.2);
  EXPECT_EQ(a.upper, 1.1);
  EXPECT_DOUBLE_EQ(a.p_adjusted, 0.6);
}

TEST(Aggregate, DegenerateSplitsCountAsPOneAndLeaveMedians) {
  std::vector<SplitEstimate> v{{1, 0, 2, 0.01, false}, {99, 99, 99, 0.0, true}, {3, 2, 4, 0.03, false}};
  auto a = aggregate_splits(v);
  EXPECT_EQ(a.point, 2.0);
  EXPECT_EQ(a.used, 2u);
  EXPECT_NEAR(a.p_adjusted, 0.06, 1e-15);
  std::vector<SplitEstimate> all_bad{{0, 0, 0, 0.0, true}, {0, 0, 0, 0.0, true}};
  auto b = aggregate_splits(all_bad);
  EXPECT_TRUE(b.degenerate);
  EXPECT_EQ(b.p_adjusted, 1.0);
}

TEST(Aggregate, MonotoneInEverySplitPValue) {
  Rng rng(1);
  for (int rep = 0; rep < 500; ++rep) {
    const std::size_t s = 1 + rep % 9;
    std::vector<SplitEstimate> v(s);
    for (auto& e : v) e.p_value = uniform01(rng);
    const double before = aggregate_splits(v).p_adjusted;
    const std::size_t k = static_cast<std::size_t>(uniform_index(rng, s));
    v[k].p_value = std::min(1.0, v[k].p_value + uniform01(rng) * 0.3);
    EXPECT_GE(aggregate_splits(v).p_adjusted, before);
  }
}

TEST(Aggregate, MedianResistsMinorityOutliers) {
  Rng rng(2);
  for (int rep = 0; rep < 200; ++rep) {
    const std::size_t s = 5 + rep % 20;
    std::vector<SplitEstimate> v(s);
    for (auto& e : v) e.point = uniform01(rng);
    // Corrupt fewer than half the splits with huge values of either sign.
    const std::size_t bad = (s - 1) / 2;
    for (std::size_t k = 0; k < bad; ++k) v[k].point = (k % 2 ? -1.0 : 1.0) * 1e9;
    double lo = 1.0, hi = 0.0;
    for (std::size_t k = bad; k < s; ++k) {
      lo = std::min(lo, v[k].point);
      hi = std::max(hi, v[k].point);
    }
    const double dirty = aggregate_splits(v).point;
    EXPECT_GE(dirty, lo);
    EXPECT_LE(dirty, hi);
  }
}

TEST(Lambda, Examples) {
  EXPECT_EQ(lambda_blp(0.0, Vector::LinSpaced(5, 0, 4)), 0.0);
  // {-sqrt 3, sqrt 3} has variance 3 with divisor n.
  Vector v(2);
  v << -std::sqrt(3.0), std::sqrt(3.0);
  EXPECT_NEAR(lambda_blp(2.0, v), 12.0, 1e-12);
  EXPECT_EQ(lambda_gates(std::vector<double>{0, 0, 0, 0}), 0.0);
  EXPECT_DOUBLE_EQ(lambda_gates(std::vector<double>{1, 2, 3, 4}), 7.5);
  EXPECT_DOUBLE_EQ(lambda_gates(std::vector<double>{-1, 1, -1, 1}), 1.0);
}

TEST(SelectLearner, TableEightValues) {
  auto blp = select_learner("BLP", {{"en", 105.035}, {"rf", 65.109}});
  ASSERT_TRUE(blp.winner.has_value());
  EXPECT_EQ(*blp.winner, "en");
  auto gates = select_learner("GATES", {{"en", 15365.680}, {"rf", 30605.060}});
  ASSERT_TRUE(gates.winner.has_value());
  EXPECT_EQ(*gates.winner, "rf");
}

TEST(SelectLearner, ExactTieHasNoWinner) {
  auto v = select_learner("BLP", {{"en", 2.0}, {"rf", 2.0}});
  EXPECT_TRUE(v.tie);
  EXPECT_FALSE(v.winner.has_value());
  EXPECT_THROW(select_learner("BLP", {{"en", 1.0}}), std::invalid_argument);
}

TEST(RunAnalysis, SingleSplitEqualsThatSplit) {
  auto g = hetero(3);
  auto sd = synth::generate(g);
  AnalysisOptions opt;
  opt.splits = 1;
  opt.seed = 17;
  auto res = run_analysis(sd.data, opt, {elastic_net_learner()});
  auto split = make_split(sd.data, 0, 17);
  auto one = analyze_split(sd.data, split, elastic_net_learner(), res.propensity, opt);
  const auto& la = res.learners[0];
  EXPECT_EQ(la.ate.point, one.blp.ate.estimate);
  EXPECT_EQ(la.ate.lower, one.blp.ate.lower);
  EXPECT_EQ(la.het.upper, one.blp.het.upper);
  EXPECT_EQ(la.het.p_adjusted, std::min(1.0, 2.0 * one.blp.het.p_value));
  EXPECT_EQ(la.gamma_difference.point, one.gates.difference.estimate);
  EXPECT_EQ(la.lambda, one.lambda);
  EXPECT_TRUE(res.verdicts.empty());
}

TEST(RunAnalysis, DeterministicAcrossParallelism) {
  auto sd = synth::generate(hetero(4, 300));
  AnalysisOptions opt;
  opt.splits = 6;
  opt.seed = 99;
  std::vector<ArmLearner> learners{elastic_net_learner(), random_forest_learner(small_forest())};
  auto a = run_analysis(sd.data, opt, learners);
  opt.parallelism = 4;
  auto b = run_analysis(sd.data, opt, learners);
  ASSERT_EQ(a.learners.size(), b.learners.size());
  for (std::size_t l = 0; l < a.learners.size(); ++l) {
    expect_same(a.learners[l].ate, b.learners[l].ate);
    expect_same(a.learners[l].het, b.learners[l].het);
    expect_same(a.learners[l].gamma_difference, b.learners[l].gamma_difference);
    for (std::size_t k = 0; k < 4; ++k) expect_same(a.learners[l].gamma[k], b.learners[l].gamma[k]);
    EXPECT_EQ(a.learners[l].lambda, b.learners[l].lambda);
    EXPECT_EQ(a.learners[l].lambda_bar, b.learners[l].lambda_bar);
    ASSERT_EQ(a.learners[l].clan.size(), b.learners[l].clan.size());
    for (std::size_t c = 0; c < a.learners[l].clan.size(); ++c) {
      EXPECT_EQ(a.learners[l].clan[c].covariate, b.learners[l].clan[c].covariate);
      expect_same(a.learners[l].clan[c].difference, b.learners[l].clan[c].difference);
    }
  }
  ASSERT_EQ(a.verdicts.size(), 2u);
  EXPECT_EQ(a.verdicts[0].winner, b.verdicts[0].winner);
}

TEST(RunAnalysis, SplitStatisticsAreNonNegative) {
  auto sd = synth::generate(hetero(5, 300));
  AnalysisOptions opt;
  opt.splits = 5;
  auto res = run_analysis(sd.data, opt, {elastic_net_learner(), synth::noise_learner()});
  for (const auto& la : res.learners)
    for (const auto& s : la.splits) {
      EXPECT_GE(s.lambda, 0.0);
      EXPECT_GE(s.lambda_bar, 0.0);
    }
}

TEST(RunAnalysis, FailedSplitsAreExcludedUpToThreshold) {
  auto sd = synth::generate(hetero(6, 200));
  auto flaky = [](int every) {
    ArmLearner l = arm_mean_learner();
    auto inner = l.fit;
    auto calls = std::make_shared<int>(0);
    l.tag = "flaky";
    l.fit = [inner, calls, every](const ArmFitRequest& req) {
      if (req.arm == Arm::treated && (*calls)++ % every == 0) throw std::runtime_error("boom");
      return inner(req);
    };
    return l;
  };
  AnalysisOptions opt;
  opt.splits = 10;
  opt.clan = false;
  auto ok = run_analysis(sd.data, opt, {flaky(10)});
  EXPECT_EQ(ok.learners[0].failures.size(), 1u);
  EXPECT_EQ(ok.learners[0].splits.size(), 9u);
  EXPECT_EQ(ok.learners[0].ate.splits, 9u);
  EXPECT_THROW(run_analysis(sd.data, opt, {flaky(4)}), EstimationError);
}

TEST(RunAnalysis, RejectsBadOptions) {
  auto sd = synth::generate(hetero(7, 100));
  AnalysisOptions opt;
  opt.splits = 0;
  EXPECT_THROW(run_analysis(sd.data, opt, {arm_mean_learner()}), ConfigError);
  opt.splits = 2;
  opt.alpha = 0.6;
  EXPECT_THROW(run_analysis(sd.data, opt, {arm_mean_learner()}), ConfigError);
  opt.alpha = 0.05;
  EXPECT_THROW(run_analysis(sd.data, opt, {}), ConfigError);
}

TEST(RunAnalysis, OutcomeScalingIsEquivariant) {
  auto sd = synth::generate(hetero(8, 300));
  AnalysisOptions opt;
  opt.splits = 4;
  opt.clan = false;
  std::vector<ArmLearner> learners{elastic_net_learner(), random_forest_learner(small_forest())};
  auto a = run_analysis(sd.data, opt, learners);
  Dataset scaled = sd.data;
  scaled.outcome *= 5.0;
  auto b = run_analysis(scaled, opt, learners);
  for (std::size_t l = 0; l < 2; ++l) {
    const auto& x = a.learners[l];
    const auto& y = b.learners[l];
    EXPECT_NEAR(y.ate.point, 5.0 * x.ate.point, 1e-7 * (1.0 + std::fabs(x.ate.point)));
    EXPECT_NEAR(y.het.point, x.het.point, 1e-7);
    for (std::size_t k = 0; k < 4; ++k) EXPECT_NEAR(y.gamma[k].point, 5.0 * x.gamma[k].point, 1e-6);
    EXPECT_NEAR(y.lambda_bar, 25.0 * x.lambda_bar, 1e-6 * (1.0 + x.lambda_bar));
  }
  EXPECT_EQ(a.verdicts[0].winner, b.verdicts[0].winner);
  EXPECT_EQ(a.verdicts[1].winner, b.verdicts[1].winner);
}

TEST(RunAnalysis, PerfectProxyDominatesNoise) {
  int wins = 0;
  for (int r = 0; r < 100; ++r) {
    auto g = hetero(500 + static_cast<std::uint64_t>(r), 400);
    auto sd = synth::generate(g);
    AnalysisOptions opt;
    opt.splits = 3;
    opt.clan = false;
    opt.seed = static_cast<std::uint64_t>(r);
    auto res = run_analysis(sd.data, opt, {synth::oracle_learner(g), synth::noise_learner()});
    wins += res.learners[0].lambda > res.learners[1].lambda;
  }
  EXPECT_GE(wins, 95);
}

TEST(RunAnalysis, NullSizeOfAggregatedHeterogeneityTest) {
  int rejections = 0;
  const int runs = 100;
  for (int r = 0; r < runs; ++r) {
    synth::DgpSpec g;
    g.n = 200;
    g.p = 5;
    g.baseline = synth::Baseline::constant;
    g.effect = synth::Effect::constant;
    g.effect_level = 0.0;
    g.seed = 900 + static_cast<std::uint64_t>(r);
    auto sd = synth::generate(g);
    AnalysisOptions opt;
    opt.splits = 25;
    opt.clan = false;
    opt.seed = static_cast<std::uint64_t>(r);
    auto res = run_analysis(sd.data, opt, {elastic_net_learner()});
    rejections += res.learners[0].het.p_adjusted < 0.05;
  }
  EXPECT_LE(rejections, 10);
}
