#include <sstream>

#include <gtest/gtest.h>

#include "genml/synth.hpp"

using namespace genml;
using namespace genml::synth;

TEST(Synth, ConstantZeroEffect) {
  DgpSpec g;
  g.effect = Effect::constant;
  g.effect_level = 0.0;
  auto s = generate(g);
  EXPECT_EQ(s.ate, 0.0);
  EXPECT_EQ(s.population_ate, 0.0);
  EXPECT_TRUE(s.s0.isZero());
}

TEST(Synth, StepEffectByGroup) {
  DgpSpec g;
  g.n = 2000;
  g.effect = Effect::step4;
  g.effect_level = 0.0;
  g.effect_scale = 1.0;
  auto s = generate(g);
  for (Index i = 0; i < g.n; ++i) EXPECT_EQ(s.s0(i), static_cast<double>(step_group(s.data.covariates(i, 0))));
  EXPECT_DOUBLE_EQ(s.population_ate, 2.5);
  EXPECT_EQ(step_group(0.0), 1);
  EXPECT_EQ(step_group(0.26), 2);
  EXPECT_EQ(step_group(0.74), 3);
  EXPECT_EQ(step_group(0.999), 4);
}

TEST(Synth, LinearEffectOnUniformCovariate) {
  DgpSpec g;
  g.n = 20000;
  g.effect = Effect::linear;
  g.effect_level = 0.0;
  g.effect_scale = 1.0;
  auto s = generate(g);
  EXPECT_DOUBLE_EQ(s.population_ate, 0.5);
  EXPECT_NEAR(s.ate, 0.5, 3.0 * std::sqrt(1.0 / 12.0 / 20000.0));
}

TEST(Synth, AteIsMeanOfS0) {
  for (auto e : {Effect::constant, Effect::linear, Effect::step4, Effect::band}) {
    DgpSpec g;
    g.n = 777;
    g.effect = e;
    g.effect_level = 0.3;
    g.seed = 5;
    auto s = generate(g);
    EXPECT_EQ(s.ate, s.s0.mean());
  }
}

TEST(Synth, TreatmentIndependentOfPotentialOutcome) {
  DgpSpec g;
  g.n = 10000;
  g.effect = Effect::linear;
  g.seed = 9;
  auto s = generate(g);
  const Vector y0 = s.data.outcome - s.data.treatment.cwiseProduct(s.s0);
  const Vector dc = s.data.treatment.array() - s.data.treatment.mean();
  const Vector yc = y0.array() - y0.mean();
  const double corr = dc.dot(yc) / std::sqrt(dc.squaredNorm() * yc.squaredNorm());
  EXPECT_LT(std::fabs(corr), 3.0 / std::sqrt(10000.0));
}

TEST(Synth, ComplementarySharesWithinStrata) {
  DgpSpec g;
  g.n = 1000;
  g.strata = 4;
  g.p_true = 0.3;
  auto s = generate(g);
  ASSERT_TRUE(s.data.strata.has_value());
  std::vector<int> treated(4, 0), total(4, 0);
  for (Index i = 0; i < g.n; ++i) {
    const int c = s.data.strata->codes[static_cast<std::size_t>(i)];
    ++total[static_cast<std::size_t>(c)];
    treated[static_cast<std::size_t>(c)] += s.data.treatment(i) == 1.0;
  }
  for (int c = 0; c < 4; ++c) EXPECT_EQ(treated[static_cast<std::size_t>(c)], 75);
  EXPECT_NO_THROW(s.data.validate());
}

TEST(Synth, ClustersAreContiguousBlocks) {
  DgpSpec g;
  g.n = 100;
  g.clusters = 10;
  g.cluster_sd = 1.0;
  auto s = generate(g);
  ASSERT_TRUE(s.data.cluster.has_value());
  EXPECT_EQ(s.data.cluster->levels(), 10);
  EXPECT_EQ(s.data.cluster->codes[0], s.data.cluster->codes[9]);
  EXPECT_NE(s.data.cluster->codes[9], s.data.cluster->codes[10]);
}

TEST(Synth, HeavyTailNoiseHasUnitVariance) {
  DgpSpec g;
  g.n = 200000;
  g.p = 2;
  g.baseline = Baseline::constant;
  g.noise = Noise::student_t;
  g.t_df = 5.0;
  auto s = generate(g);
  const Vector e = s.data.outcome - s.b0 - s.data.treatment.cwiseProduct(s.s0);
  const double var = (e.array() - e.mean()).square().mean();
  EXPECT_NEAR(var, 1.0, 0.05);
}

TEST(Synth, DeterministicAndSeedSensitive) {
  DgpSpec g;
  g.n = 50;
  auto a = generate(g);
  auto b = generate(g);
  EXPECT_EQ(a.data.outcome, b.data.outcome);
  EXPECT_EQ(a.data.treatment, b.data.treatment);
  g.seed = 2;
  EXPECT_NE(generate(g).data.outcome, a.data.outcome);
  std::ostringstream x, y;
  write_csv(a, x);
  write_csv(b, y);
  EXPECT_EQ(x.str(), y.str());
}

TEST(Synth, CsvRoundTripsThroughLoader) {
  DgpSpec g;
  g.n = 40;
  g.p = 3;
  g.strata = 2;
  g.clusters = 8;
  auto s = generate(g);
  std::ostringstream os;
  write_csv(s, os);
  std::istringstream is(os.str());
  auto d = from_table(csv::parse(is), schema_for(g));
  EXPECT_EQ(d.n_obs(), 40);
  EXPECT_EQ(d.outcome, s.data.outcome);
  EXPECT_EQ(d.covariates, s.data.covariates);
  EXPECT_EQ(d.strata->codes, s.data.strata->codes);
}

TEST(Synth, InvalidSpecsAreRejected) {
  DgpSpec g;
  g.p_true = 1.0;
  EXPECT_THROW(generate(g), ConfigError);
  g.p_true = 0.5;
  g.n = 1;
  EXPECT_THROW(generate(g), ConfigError);
}

TEST(Synth, OracleLearnerReproducesTruth) {
  DgpSpec g;
  g.n = 30;
  g.effect = Effect::linear;
  auto s = generate(g);
  auto l = oracle_learner(g);
  Vector dummy = Vector::Zero(30);
  auto t = l.fit(ArmFitRequest{s.data.covariates, dummy, Arm::treated, 1});
  auto c = l.fit(ArmFitRequest{s.data.covariates, dummy, Arm::control, 1});
  EXPECT_LT((t(s.data.covariates) - c(s.data.covariates) - s.s0).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LT((c(s.data.covariates) - s.b0).cwiseAbs().maxCoeff(), 1e-12);
}
