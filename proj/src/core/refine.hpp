#pragma once

#include <string>

#include "core/data_model.hpp"
#include "core/parameters.hpp"

namespace lmdrop {

struct RefineOptions {
  double grad_tol = 1e-6;
  int max_iter = 500;
};

struct RefineResult {
  ParameterSet theta;
  double loglik = 0.0;
  double start_loglik = 0.0;
  double grad_norm = 0.0;
  int iterations = 0;
  bool converged = false;  // gradient norm reached grad_tol
  std::string warning;     // non-empty when the ascent stopped early
};

// BFGS ascent on the conditional log-likelihood over the unconstrained
// parametric parameters, using the analytic score. The returned log-likelihood
// is never below the starting value: if no ascent step can be found the input
// is returned unchanged with a warning.
RefineResult refine_newton(const Dataset& data, const ParameterSet& theta_em,
                           const RefineOptions& opts = {});

}  // namespace lmdrop
