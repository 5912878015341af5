#pragma once

// Per-arm learners used to build the proxy predictors. A learner is fitted on
// one treatment arm of the auxiliary sample and returns a predictor for the
// main sample.

#include <functional>
#include <memory>
#include <string>

#include "genml/elastic_net.hpp"
#include "genml/error.hpp"
#include "genml/random_forest.hpp"

namespace genml {

enum class Arm { control = 0, treated = 1 };

struct ArmFitRequest {
  const Matrix& x;
  const Vector& y;
  Arm arm;
  std::uint64_t seed;
};

using ArmPredictor = std::function<Vector(const Matrix&)>;

struct ArmLearner {
  std::string tag;  // short identifier, e.g. "en"
  std::string display_name;
  std::function<ArmPredictor(const ArmFitRequest&)> fit;
  bool unit_scaling = true;  // fit on [0,1]-scaled covariates and outcome
};

struct ElasticNetConfig {
  TuningPlan tuning;  // seed is replaced per fit
  ElasticNetOptions solver;
};

inline ArmLearner elastic_net_learner(ElasticNetConfig cfg = {}) {
  ArmLearner l;
  l.tag = "en";
  l.display_name = "Elastic Net";
  l.fit = [cfg](const ArmFitRequest& req) -> ArmPredictor {
    TuningPlan plan = cfg.tuning;
    plan.seed = req.seed;
    TuningResult res = tune_elastic_net(req.x, req.y, plan, cfg.solver);
    if (!res.model.converged)
      throw EstimationError("elastic net did not converge after " + std::to_string(res.model.iterations) +
                            " sweeps (max change " + std::to_string(res.model.max_change) + ")");
    return [model = std::move(res.model)](const Matrix& x) { return model.predict(x); };
  };
  return l;
}

inline ArmLearner random_forest_learner(ForestParams params = {}) {
  ArmLearner l;
  l.tag = "rf";
  l.display_name = "Random Forest";
  l.fit = [params](const ArmFitRequest& req) -> ArmPredictor {
    ForestParams p = params;
    p.seed = req.seed;
    auto model = std::make_shared<ForestModel>(fit_forest(req.x, req.y, p));
    return [model](const Matrix& x) { return model->predict(x); };
  };
  return l;
}

// Predicts the arm's training mean everywhere; scale-equivariant.
inline ArmLearner arm_mean_learner(bool unit_scaling = true) {
  ArmLearner l;
  l.tag = "mean";
  l.display_name = "Arm Mean";
  l.unit_scaling = unit_scaling;
  l.fit = [](const ArmFitRequest& req) -> ArmPredictor {
    const double m = req.y.mean();
    return [m](const Matrix& x) { return Vector::Constant(x.rows(), m); };
  };
  return l;
}

}  // namespace genml
