#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "core/data_model.hpp"
#include "core/likelihood.hpp"
#include "core/logit_solvers.hpp"
#include "core/parameters.hpp"

namespace lmdrop {

struct EMConfig {
  double short_run_threshold = 1e-2;
  double final_tol = 1e-5;
  int n_short_starts = 10;
  int n_long_runs = 10;
  int max_iter = 2000;
  int short_max_iter = 200;
  bool refine_with_newton = true;
  double refine_trigger = 1e-4;
  double start_spread = 2.0;
  double monotone_slack = 1e-8;
  bool check_blocks = false;  // verify each M-step block against its Q term
  std::uint64_t seed = 1;
  int threads = 1;
  NewtonOptions inner;

  void validate() const;
};

struct FitResult {
  ParameterSet theta;
  double loglik = 0.0;
  std::vector<double> loglik_trace;
  bool converged = false;
  int n_iter = 0;
  Posteriors posteriors;
  bool spurious_flag = false;
  bool separation_flag = false;
  bool slope_unidentified = false;
  bool refined = false;
  int empty_transition_rows = 0;
  double min_occupancy = 0.0;
  std::vector<std::string> warnings;
};

// Expected complete-data log-likelihood, split by M-step block.
struct QBlocks {
  double initial = 0.0;
  double transition = 0.0;
  double emission = 0.0;
  double total() const { return initial + transition + emission; }
};
QBlocks expected_complete_loglik(const Dataset& data, const Posteriors& posteriors,
                                 const ParameterSet& theta);

struct ChainStepInfo {
  bool slope_unidentified = false;
  bool converged = true;
};

// Weighted multinomial-logit updates of gamma (weights xi at t = 1) and, unless
// `include_transitions` is false, of each phi origin row (weights zeta).
ChainParamsParametric m_step_chain_parametric(const Posteriors& posteriors,
                                              const std::vector<int>& dropout_times,
                                              const ChainParamsParametric& current,
                                              bool include_transitions,
                                              const NewtonOptions& opts = {},
                                              ChainStepInfo* info = nullptr);

struct SaturatedStepInfo {
  int empty_rows = 0;  // transition rows with no posterior mass in strata with S >= 2
};

// Closed-form stratum frequencies.
ChainParamsSaturated m_step_chain_saturated(const Posteriors& posteriors,
                                            const std::vector<int>& dropout_times, int horizon,
                                            SaturatedStepInfo* info = nullptr);

EmissionFit m_step_emission(const Dataset& data, const Posteriors& posteriors,
                            const EmissionParams& current, const NewtonOptions& opts = {});

// Average posterior state occupancy over all observed (i, t).
Eigen::VectorXd state_occupancy(const Posteriors& posteriors);
bool is_spurious(const Eigen::VectorXd& occupancy);

// One EM trajectory from `start` until the relative log-likelihood change falls
// below `tol` or `max_iter` iterations. Throws ErrorCode::Numerical on a
// monotonicity violation beyond cfg.monotone_slack.
struct EMRun {
  ParameterSet theta;
  std::vector<double> trace;
  bool converged = false;
  bool separation = false;
  bool slope_unidentified = false;
  int empty_transition_rows = 0;
  Posteriors posteriors;  // at theta
};
EMRun run_em(const Dataset& data, ParameterSet start, double tol, int max_iter, const EMConfig& cfg);

struct Candidate {
  int start_index = 0;
  EMRun run;
  double loglik = 0.0;
  double min_occupancy = 0.0;
  bool spurious = false;
};

// Random starts run to the short-run threshold, ranked by log-likelihood with
// spurious candidates demoted behind all others.
std::vector<Candidate> short_run_init(const Dataset& data, ModelKind model, ChainVariant variant,
                                      int n_states, const EMConfig& cfg);

// Full protocol: short runs, long runs from the best candidates, optional
// quasi-Newton refinement, states ordered by ascending intercept.
FitResult fit_em(const Dataset& data, ModelKind model, ChainVariant variant, int n_states,
                 const EMConfig& cfg);
FitResult fit_time_constant(const Dataset& data, int n_states, const EMConfig& cfg);

// Single-start fit (long run + refinement) used by the bootstrap.
FitResult fit_from_start(const Dataset& data, const ParameterSet& start, const EMConfig& cfg);

}  // namespace lmdrop
