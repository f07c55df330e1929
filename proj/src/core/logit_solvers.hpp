#pragma once

#include <Eigen/Dense>

#include <functional>
#include <vector>

#include "core/data_model.hpp"
#include "core/likelihood.hpp"
#include "core/parameters.hpp"

namespace lmdrop {

struct NewtonOptions {
  double score_tol = 1e-8;
  int max_iter = 50;
  double ridge_start = 1e-6;
  double ridge_max = 1e-2;
};

struct NewtonEval {
  double value = 0.0;
  Eigen::VectorXd gradient;
  Eigen::MatrixXd neg_hessian;  // positive semi-definite for the concave objectives used here
};

struct NewtonResult {
  Eigen::VectorXd x;
  double value = 0.0;
  double score_norm = 0.0;
  int iterations = 0;
  bool converged = false;
  bool ridge_used = false;
};

// Damped Newton ascent with step halving. Every accepted step is non-decreasing in
// the objective. A singular Hessian is retried with ridge damping ridge_start,
// doubling up to ridge_max (scaled by the Hessian diagonal), then
// ErrorCode::Numerical. `stop` may end the iteration early (e.g. divergence caps).
NewtonResult newton_maximize(const std::function<NewtonEval(const Eigen::VectorXd&, bool)>& eval,
                             Eigen::VectorXd start, const NewtonOptions& opts,
                             const std::function<bool(const Eigen::VectorXd&)>& stop = {});

// Weighted multinomial logit on the design z = (1, s): maximises
// sum_s sum_j W(s, j) log softmax_j(coef * z_s) with category J as reference.
struct MultinomialFit {
  Eigen::MatrixXd coef;  // (J-1) x 2
  double value = 0.0;
  double score_norm = 0.0;
  int iterations = 0;
  bool converged = false;
  bool slope_unidentified = false;  // fewer than two strata carry weight; slope held fixed
};

MultinomialFit fit_multinomial_logit(const std::vector<int>& strata, const Eigen::MatrixXd& weights,
                                     const Eigen::MatrixXd& start, const NewtonOptions& opts = {});
double multinomial_objective(const std::vector<int>& strata, const Eigen::MatrixXd& weights,
                             const Eigen::MatrixXd& coef);

// Posterior-weighted Bernoulli-logit fit of (beta, u_1..u_J) pooled over (i, t, j).
struct EmissionFit {
  EmissionParams params;
  double value = 0.0;  // emission block of the expected complete-data log-likelihood
  double score_norm = 0.0;
  int iterations = 0;
  bool converged = false;
  bool separation = false;
};

inline constexpr double kSeparationNorm = 50.0;

EmissionFit fit_emission(const Dataset& data, const Posteriors& posteriors, const EmissionParams& start,
                         const NewtonOptions& opts = {});
double emission_objective(const Dataset& data, const Posteriors& posteriors, const EmissionParams& em);

// Ordinary logistic regression of y on [x1, x2] (the J = 1 model).
EmissionFit fit_pooled_logistic(const Dataset& data, const NewtonOptions& opts = {});

}  // namespace lmdrop
