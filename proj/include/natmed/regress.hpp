#pragma once

#include <Eigen/Dense>

#include <memory>
#include <vector>

#include "natmed/errors.hpp"

namespace natmed {

enum class Link { logit, identity };

enum class LearnerKind {
  intercept_only,
  glm_main_terms,
  glm_all_interactions,
  saturated,
  ensemble
};

struct LearnerSpec {
  LearnerKind kind = LearnerKind::glm_main_terms;
  Link link = Link::logit;
  std::vector<LearnerSpec> ensemble_members;  // ensemble only
  int cv_folds = 10;
};

// Raw predictors; design expansion (intercept, interaction products) happens
// inside fit according to the learner kind.
struct WeightedSample {
  Eigen::MatrixXd X;
  Eigen::VectorXd y;
  Eigen::VectorXd w;
};

struct PredictInfo {
  int unseen_cells = 0;  // saturated cells absent at fit time; global-mean fallback
  int clipped = 0;       // predictions moved to the [p_min, 1-p_min] boundary
};

class FittedRegression {
 public:
  FittedRegression() = default;

  const LearnerSpec& spec() const;
  // GLM/intercept coefficients on the expanded design; empty otherwise.
  const Eigen::VectorXd& coefficients() const;
  // Simplex weights over retained ensemble members; empty otherwise.
  const Eigen::VectorXd& ensemble_weights() const;
  // Cross-validated risk of the stacked fit; NaN for non-ensembles.
  double cv_risk() const;
  bool irls_fallback() const;
  bool dropped_member() const;
  double p_min() const;

  // One prediction per row; logit-link outputs clipped to [p_min, 1-p_min].
  Eigen::VectorXd predict(const Eigen::MatrixXd& X, PredictInfo* info = nullptr) const;

  struct Impl;
  explicit FittedRegression(std::shared_ptr<const Impl> impl) : impl_(std::move(impl)) {}

 private:
  std::shared_ptr<const Impl> impl_;
};

// Weighted fit of a single learner.  Logit GLMs run IRLS (max 50 iterations,
// relative deviance tolerance 1e-8) with a ridge-stabilized retry on
// non-convergence, flagged via irls_fallback().  p_min controls prediction
// clipping for the logit link; pass 0 to clip only into [0, 1].
FittedRegression fit(const LearnerSpec& spec, const WeightedSample& sample,
                     double p_min = 1e-3);

// Cross-validated convex stacking: V-fold (round-robin row assignment)
// predictions per member, exact simplex-constrained weighted least squares
// for the weights, members refit on the full sample.  Members that fail to
// fit are dropped with a flag; all failing is an error.
FittedRegression fit_ensemble(const std::vector<LearnerSpec>& members,
                              const WeightedSample& sample, int folds,
                              double p_min = 1e-3);

}  // namespace natmed
