#pragma once

// Synthetic randomized trials with known baseline and treatment-effect
// functions, plus stub learners that know (or ignore) the truth.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include "genml/dataset.hpp"
#include "genml/error.hpp"
#include "genml/learner.hpp"
#include "genml/random.hpp"

namespace genml::synth {

enum class Baseline { constant, linear, step };
enum class Effect { constant, linear, step4, band };
enum class Noise { gaussian, student_t };

struct DgpSpec {
  Index n = 1000;
  Index p = 10;
  double p_true = 0.5;
  Baseline baseline = Baseline::linear;
  double baseline_scale = 1.0;
  Effect effect = Effect::constant;
  double effect_level = 0.0;  // c
  double effect_scale = 1.0;
  double noise_sd = 1.0;
  Noise noise = Noise::gaussian;
  double t_df = 3.0;
  int clusters = 0;  // 0: no cluster column
  double cluster_sd = 0.0;
  int strata = 0;  // 0: no strata column
  std::uint64_t seed = 1;

  void validate() const {
    if (n < 2) throw ConfigError("dgp: n must be at least 2");
    if (p < 1) throw ConfigError("dgp: p must be at least 1");
    if (!(p_true > 0.0 && p_true < 1.0)) throw ConfigError("dgp: p_true must lie in (0, 1)");
    if (noise_sd < 0.0 || cluster_sd < 0.0) throw ConfigError("dgp: standard deviations must be non-negative");
    if (noise == Noise::student_t && !(t_df > 2.0)) throw ConfigError("dgp: t noise needs df > 2");
    if (clusters < 0 || strata < 0) throw ConfigError("dgp: negative cluster or strata count");
    if (clusters > 0 && clusters > n) throw ConfigError("dgp: more clusters than rows");
    if (strata > 0 && strata > (clusters > 0 ? clusters : n / 2))
      throw ConfigError("dgp: too many strata for the cluster/row count");
    if (baseline == Baseline::step && p < 2)
      throw ConfigError("dgp: step baseline needs p >= 2");
  }
};

// Ground truth as functions of one covariate row.
inline double baseline_at(const DgpSpec& g, const double* z, Index stride) {
  switch (g.baseline) {
    case Baseline::constant:
      return g.baseline_scale;
    case Baseline::linear: {
      double s = 0.0;
      for (Index j = 0; j < std::min<Index>(3, g.p); ++j) s += (j == 2 ? -1.0 : 1.0) * z[j * stride];
      return g.baseline_scale * s;
    }
    case Baseline::step:
      return g.baseline_scale * (z[stride] > 0.5 ? 1.0 : 0.0);
  }
  return 0.0;
}

inline int step_group(double z1) { return std::min(4, static_cast<int>(std::floor(4.0 * z1)) + 1); }

inline double effect_at(const DgpSpec& g, const double* z, Index) {
  const double z1 = z[0];
  switch (g.effect) {
    case Effect::constant:
      return g.effect_level;
    case Effect::linear:
      return g.effect_level + g.effect_scale * z1;
    case Effect::step4:
      return g.effect_level + g.effect_scale * step_group(z1);
    case Effect::band:
      return g.effect_level + (z1 >= 0.25 && z1 < 0.75 ? g.effect_scale : -g.effect_scale);
  }
  return 0.0;
}

// E[s0(Z)] under Z1 ~ Uniform(0, 1).
inline double population_ate(const DgpSpec& g) {
  switch (g.effect) {
    case Effect::constant:
    case Effect::band:
      return g.effect_level;
    case Effect::linear:
      return g.effect_level + 0.5 * g.effect_scale;
    case Effect::step4:
      return g.effect_level + 2.5 * g.effect_scale;
  }
  return 0.0;
}

struct SynthData {
  Dataset data;
  Vector s0;
  Vector b0;
  double ate = 0.0;             // mean of s0 over the generated rows
  double population_ate = 0.0;  // expectation under the covariate law
};

inline std::string covariate_name(Index j) { return "z" + std::to_string(j + 1); }

inline SynthData generate(const DgpSpec& g) {
  g.validate();
  Rng rng(derive_seed(g.seed, {0x73796e7468ULL}));
  std::normal_distribution<double> normal(0.0, 1.0);
  const Index n = g.n;

  SynthData out;
  Dataset& d = out.data;
  d.outcome_name = "y";
  d.treatment_name = "d";
  d.covariates.resize(n, g.p);
  for (Index j = 0; j < g.p; ++j)
    for (Index i = 0; i < n; ++i) d.covariates(i, j) = uniform01(rng);
  for (Index j = 0; j < g.p; ++j) d.covariate_names.push_back(covariate_name(j));

  // Clusters are contiguous row blocks; strata group whole clusters.
  std::vector<int> cluster(static_cast<std::size_t>(n), 0), stratum(static_cast<std::size_t>(n), 0);
  for (Index i = 0; i < n; ++i) {
    if (g.clusters > 0) {
      const int c = static_cast<int>(i * g.clusters / n);
      cluster[static_cast<std::size_t>(i)] = c;
      stratum[static_cast<std::size_t>(i)] = g.strata > 0 ? c % g.strata : 0;
    } else if (g.strata > 0) {
      stratum[static_cast<std::size_t>(i)] = static_cast<int>(i * g.strata / n);
    }
  }
  auto labels = [](const std::vector<int>& codes, const std::string& prefix) {
    std::vector<std::string> raw;
    raw.reserve(codes.size());
    for (int c : codes) {
      std::string s = std::to_string(c);
      raw.push_back(prefix + std::string(4 - std::min<std::size_t>(4, s.size()), '0') + s);
    }
    return raw;
  };
  if (g.clusters > 0) d.cluster = encode_categorical("cluster", labels(cluster, "c"));
  if (g.strata > 0) d.strata = encode_categorical("stratum", labels(stratum, "s"));

  // Complete randomization within each stratum.
  d.treatment = Vector::Zero(n);
  const int levels = std::max(1, g.strata);
  for (int s = 0; s < levels; ++s) {
    std::vector<Index> rows;
    for (Index i = 0; i < n; ++i)
      if (stratum[static_cast<std::size_t>(i)] == s) rows.push_back(i);
    if (rows.empty()) continue;
    shuffle(rows, rng);
    auto treated = static_cast<std::size_t>(std::llround(g.p_true * static_cast<double>(rows.size())));
    if (rows.size() >= 2) treated = std::clamp<std::size_t>(treated, 1, rows.size() - 1);
    for (std::size_t k = 0; k < treated; ++k) d.treatment(rows[k]) = 1.0;
  }

  std::vector<double> cluster_effect(static_cast<std::size_t>(std::max(1, g.clusters)), 0.0);
  for (auto& u : cluster_effect) u = g.cluster_sd * normal(rng);
  std::student_t_distribution<double> student(g.noise == Noise::student_t ? g.t_df : 3.0);
  const double t_scale = g.noise == Noise::student_t ? std::sqrt((g.t_df - 2.0) / g.t_df) : 1.0;

  out.s0.resize(n);
  out.b0.resize(n);
  d.outcome.resize(n);
  for (Index i = 0; i < n; ++i) {
    const double* z = d.covariates.data() + i;
    out.b0(i) = baseline_at(g, z, n);
    out.s0(i) = effect_at(g, z, n);
    const double e = g.noise == Noise::gaussian ? normal(rng) : t_scale * student(rng);
    d.outcome(i) = out.b0(i) + d.treatment(i) * out.s0(i) + g.noise_sd * e +
                   (g.clusters > 0 ? cluster_effect[static_cast<std::size_t>(cluster[static_cast<std::size_t>(i)])] : 0.0);
  }
  out.ate = out.s0.mean();
  out.population_ate = population_ate(g);
  return out;
}

inline Schema schema_for(const DgpSpec& g) {
  Schema s;
  s.roles["y"] = Role::outcome;
  s.roles["d"] = Role::treatment;
  for (Index j = 0; j < g.p; ++j) s.roles[covariate_name(j)] = Role::covariate;
  if (g.clusters > 0) s.roles["cluster"] = Role::cluster;
  if (g.strata > 0) s.roles["stratum"] = Role::strata;
  return s;
}

// Knows b0 and s0: the treated arm predicts b0 + s0, the control arm b0.
inline ArmLearner oracle_learner(const DgpSpec& g) {
  ArmLearner l;
  l.tag = "oracle";
  l.display_name = "Oracle";
  l.unit_scaling = false;
  l.fit = [g](const ArmFitRequest& req) -> ArmPredictor {
    const bool treated = req.arm == Arm::treated;
    return [g, treated](const Matrix& x) {
      Vector out(x.rows());
      for (Index i = 0; i < x.rows(); ++i) {
        const double* z = x.data() + i;
        out(i) = baseline_at(g, z, x.rows()) + (treated ? effect_at(g, z, x.rows()) : 0.0);
      }
      return out;
    };
  };
  return l;
}

// Predictions unrelated to the data: standard normal draws on the treated
// arm, zero on the control arm.
inline ArmLearner noise_learner() {
  ArmLearner l;
  l.tag = "noise";
  l.display_name = "Noise";
  l.unit_scaling = false;
  l.fit = [](const ArmFitRequest& req) -> ArmPredictor {
    if (req.arm == Arm::control) return [](const Matrix& x) { return Vector::Zero(x.rows()).eval(); };
    const std::uint64_t seed = req.seed;
    return [seed](const Matrix& x) {
      Rng rng(seed);
      std::normal_distribution<double> normal(0.0, 1.0);
      Vector out(x.rows());
      for (Index i = 0; i < x.rows(); ++i) out(i) = normal(rng);
      return out;
    };
  };
  return l;
}

inline void write_csv(const SynthData& s, std::ostream& os) {
  const Dataset& d = s.data;
  os.precision(17);
  os << "y,d";
  for (const auto& c : d.covariate_names) os << ',' << c;
  if (d.cluster) os << ",cluster";
  if (d.strata) os << ",stratum";
  os << '\n';
  for (Index i = 0; i < d.n_obs(); ++i) {
    os << d.outcome(i) << ',' << static_cast<int>(d.treatment(i));
    for (Index j = 0; j < d.n_covariates(); ++j) os << ',' << d.covariates(i, j);
    if (d.cluster) os << ',' << d.cluster->labels[static_cast<std::size_t>(d.cluster->codes[static_cast<std::size_t>(i)])];
    if (d.strata) os << ',' << d.strata->labels[static_cast<std::size_t>(d.strata->codes[static_cast<std::size_t>(i)])];
    os << '\n';
  }
}

inline void write_truth_csv(const SynthData& s, std::ostream& os) {
  os.precision(17);
  os << "row,s0,b0\n";
  for (Index i = 0; i < s.s0.size(); ++i) os << i << ',' << s.s0(i) << ',' << s.b0(i) << '\n';
}

}  // namespace genml::synth
