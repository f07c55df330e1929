#include "core/em_fitter.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>

#include "core/error.hpp"
#include "core/parallel.hpp"
#include "core/refine.hpp"
#include "core/rng.hpp"

namespace lmdrop {

void EMConfig::validate() const {
  if (!(short_run_threshold > 0.0) || !(final_tol > 0.0)) {
    fail(ErrorCode::InvalidArgument, "EM thresholds must be positive");
  }
  if (!(short_run_threshold > final_tol)) {
    fail(ErrorCode::InvalidArgument, "short_run_threshold must exceed final_tol");
  }
  if (n_short_starts < 1 || n_long_runs < 1 || max_iter < 1 || short_max_iter < 1) {
    fail(ErrorCode::InvalidArgument, "EM start and iteration counts must be >= 1");
  }
}

namespace {

double relative_change(double prev, double next) {
  return std::abs(next - prev) / std::max(std::abs(prev), 1e-300);
}

// Stratum-aggregated weights: row s-1 sums the chosen weights of subjects with S_i = s.
Eigen::MatrixXd initial_weights(const Posteriors& post, const std::vector<int>& dropout, int horizon) {
  const int J = post.n_states();
  Eigen::MatrixXd W = Eigen::MatrixXd::Zero(horizon, J);
  for (std::size_t i = 0; i < dropout.size(); ++i) {
    W.row(dropout[i] - 1) += post.subjects[i].xi.row(0);
  }
  return W;
}

std::vector<Eigen::MatrixXd> transition_weights(const Posteriors& post, const std::vector<int>& dropout,
                                                int horizon) {
  const int J = post.n_states();
  std::vector<Eigen::MatrixXd> W(static_cast<std::size_t>(J), Eigen::MatrixXd::Zero(horizon, J));
  for (std::size_t i = 0; i < dropout.size(); ++i) {
    Eigen::MatrixXd counts = Eigen::MatrixXd::Zero(J, J);
    for (const auto& z : post.subjects[i].zeta) counts += z;
    for (int k = 0; k < J; ++k) W[static_cast<std::size_t>(k)].row(dropout[i] - 1) += counts.row(k);
  }
  return W;
}

int max_dropout(const std::vector<int>& dropout) {
  return dropout.empty() ? 1 : *std::max_element(dropout.begin(), dropout.end());
}

}  // namespace

QBlocks expected_complete_loglik(const Dataset& data, const Posteriors& posteriors,
                                 const ParameterSet& theta) {
  QBlocks q;
  const int J = theta.n_states();
  for (std::size_t i = 0; i < data.size(); ++i) {
    const int s = data.panels[i].dropout_time();
    const auto& post = posteriors.subjects[i];
    const ChainLaws laws = laws_for(theta, s);
    for (int j = 0; j < J; ++j) {
      if (post.xi(0, j) > 0.0) q.initial += post.xi(0, j) * std::log(laws.initial(j));
    }
    if (theta.model == ModelKind::TimeConstant) continue;
    for (const auto& z : post.zeta) {
      for (int k = 0; k < J; ++k) {
        for (int j = 0; j < J; ++j) {
          if (z(k, j) > 0.0) q.transition += z(k, j) * std::log(laws.transition(k, j));
        }
      }
    }
  }
  q.emission = emission_objective(data, posteriors, theta.emission);
  return q;
}

ChainParamsParametric m_step_chain_parametric(const Posteriors& posteriors,
                                              const std::vector<int>& dropout_times,
                                              const ChainParamsParametric& current,
                                              bool include_transitions, const NewtonOptions& opts,
                                              ChainStepInfo* info) {
  const int horizon = max_dropout(dropout_times);
  std::vector<int> strata(static_cast<std::size_t>(horizon));
  std::iota(strata.begin(), strata.end(), 1);

  ChainParamsParametric next = current;
  ChainStepInfo local;
  const auto init = fit_multinomial_logit(strata, initial_weights(posteriors, dropout_times, horizon),
                                          current.gamma, opts);
  next.gamma = init.coef;
  local.slope_unidentified = init.slope_unidentified;
  local.converged = init.converged;
  if (include_transitions) {
    const auto W = transition_weights(posteriors, dropout_times, horizon);
    for (std::size_t k = 0; k < W.size(); ++k) {
      const auto fit = fit_multinomial_logit(strata, W[k], current.phi[k], opts);
      next.phi[k] = fit.coef;
      local.slope_unidentified = local.slope_unidentified || fit.slope_unidentified;
      local.converged = local.converged && fit.converged;
    }
  }
  if (info) *info = local;
  return next;
}

ChainParamsSaturated m_step_chain_saturated(const Posteriors& posteriors,
                                            const std::vector<int>& dropout_times, int horizon,
                                            SaturatedStepInfo* info) {
  const int J = posteriors.n_states();
  if (max_dropout(dropout_times) > horizon) {
    fail(ErrorCode::InvalidArgument, "dropout time exceeds saturated horizon");
  }
  ChainParamsSaturated out = ChainParamsSaturated::uniform(J, horizon);
  const Eigen::MatrixXd Wi = initial_weights(posteriors, dropout_times, horizon);
  const auto Wt = transition_weights(posteriors, dropout_times, horizon);
  std::vector<int> n_t(static_cast<std::size_t>(horizon), 0);
  for (int s : dropout_times) ++n_t[static_cast<std::size_t>(s - 1)];

  SaturatedStepInfo local;
  for (int t = 0; t < horizon; ++t) {
    const auto ti = static_cast<std::size_t>(t);
    if (n_t[ti] == 0) {
      out.observed[ti] = false;
      continue;
    }
    out.initial[ti] = Wi.row(t).transpose() / static_cast<double>(n_t[ti]);
    for (int k = 0; k < J; ++k) {
      const Eigen::RowVectorXd counts = Wt[static_cast<std::size_t>(k)].row(t);
      const double mass = counts.sum();
      if (mass > 0.0) {
        out.transition[ti].row(k) = counts / mass;
      } else if (t >= 1) {
        ++local.empty_rows;
      }
    }
  }
  if (info) *info = local;
  return out;
}

EmissionFit m_step_emission(const Dataset& data, const Posteriors& posteriors,
                            const EmissionParams& current, const NewtonOptions& opts) {
  return fit_emission(data, posteriors, current, opts);
}

Eigen::VectorXd state_occupancy(const Posteriors& posteriors) {
  const int J = posteriors.n_states();
  Eigen::VectorXd occ = Eigen::VectorXd::Zero(J);
  double n = 0.0;
  for (const auto& s : posteriors.subjects) {
    occ += s.xi.colwise().sum().transpose();
    n += static_cast<double>(s.xi.rows());
  }
  return n > 0 ? Eigen::VectorXd(occ / n) : occ;
}

bool is_spurious(const Eigen::VectorXd& occupancy) {
  const auto J = occupancy.size();
  if (J < 2) return false;
  return occupancy.minCoeff() < 0.5 / static_cast<double>(J);
}

EMRun run_em(const Dataset& data, ParameterSet start, double tol, int max_iter, const EMConfig& cfg) {
  const auto dropout = data.dropout_times();
  EMRun run;
  run.theta = std::move(start);
  auto e = e_step(data, run.theta);
  run.trace.push_back(e.loglik.total);
  const bool markov = run.theta.model == ModelKind::LatentMarkov;

  auto check_block = [&](double before, double after, const char* block) {
    if (after < before - 1e-9 * std::max(1.0, std::abs(before))) {
      fail(ErrorCode::Numerical, std::string("M-step block '") + block + "' decreased its Q term");
    }
  };

  for (int iter = 0; iter < max_iter; ++iter) {
    const auto& post = e.posteriors;
    ParameterSet next = run.theta;
    QBlocks q_before;
    if (cfg.check_blocks) q_before = expected_complete_loglik(data, post, run.theta);

    if (run.theta.is_saturated()) {
      SaturatedStepInfo info;
      next.saturated = m_step_chain_saturated(post, dropout, data.horizon, &info);
      run.empty_transition_rows = info.empty_rows;
    } else {
      ChainStepInfo info;
      next.parametric = m_step_chain_parametric(post, dropout, run.theta.parametric, markov, cfg.inner, &info);
      run.slope_unidentified = info.slope_unidentified;
    }
    const auto em = m_step_emission(data, post, run.theta.emission, cfg.inner);
    next.emission = em.params;
    run.separation = em.separation;

    if (cfg.check_blocks) {
      const QBlocks q_after = expected_complete_loglik(data, post, next);
      check_block(q_before.initial, q_after.initial, "initial");
      check_block(q_before.transition, q_after.transition, "transition");
      check_block(q_before.emission, q_after.emission, "emission");
    }

    auto e_next = e_step(data, next);
    const double prev = run.trace.back();
    const double cur = e_next.loglik.total;
    if (cur < prev - cfg.monotone_slack) {
      fail(ErrorCode::Numerical, "EM log-likelihood decreased from " + std::to_string(prev) + " to " +
                                     std::to_string(cur) + " (M-step defect)");
    }
    run.theta = std::move(next);
    e = std::move(e_next);
    run.trace.push_back(cur);
    if (relative_change(prev, cur) < tol) {
      run.converged = true;
      break;
    }
  }
  run.posteriors = std::move(e.posteriors);
  return run;
}

namespace {

ParameterSet random_start(const Dataset& data, ModelKind model, ChainVariant variant, int J,
                          const EmissionFit& pooled, double spread, Rng& rng) {
  ParameterSet theta = ParameterSet::zeros(model, variant, J, data.p1, data.p2, data.horizon);
  theta.emission.beta = pooled.params.beta;
  std::normal_distribution<double> normal(0.0, spread);
  for (int j = 0; j < J; ++j) {
    theta.emission.u.row(j) = pooled.params.u.row(0);
    if (data.p2 > 0) theta.emission.u(j, 0) += normal(rng);
  }
  return theta;
}

FitResult finish(const Dataset& data, EMRun run, const EMConfig& cfg) {
  FitResult out;
  out.converged = run.converged;
  out.n_iter = static_cast<int>(run.trace.size()) - 1;
  out.loglik_trace = run.trace;
  out.separation_flag = run.separation;
  out.slope_unidentified = run.slope_unidentified;
  out.empty_transition_rows = run.empty_transition_rows;
  ParameterSet theta = std::move(run.theta);

  const bool can_refine = cfg.refine_with_newton && !theta.is_saturated();
  const bool near_stationary = run.trace.size() >= 2 &&
      relative_change(run.trace[run.trace.size() - 2], run.trace.back()) < cfg.refine_trigger;
  if (can_refine && near_stationary) {
    const auto r = refine_newton(data, theta);
    if (!r.warning.empty()) out.warnings.push_back(r.warning);
    const double noise = 1e-12 * (1.0 + std::abs(run.trace.back()));
    if (r.loglik > run.trace.back() || (r.converged && r.loglik >= run.trace.back() - noise)) {
      theta = r.theta;
      out.refined = true;
      out.loglik_trace.push_back(r.loglik);
    }
  }

  out.theta = order_states_by_intercept(theta);
  auto e = e_step(data, out.theta);
  out.loglik = e.loglik.total;
  out.posteriors = std::move(e.posteriors);
  const Eigen::VectorXd occ = state_occupancy(out.posteriors);
  out.min_occupancy = occ.size() ? occ.minCoeff() : 0.0;
  out.spurious_flag = is_spurious(occ);
  if (out.separation_flag) out.warnings.emplace_back("possible separation in the emission regression");
  if (out.slope_unidentified) {
    out.warnings.emplace_back("dropout slope unidentified (single stratum); held at its start value");
  }
  if (out.empty_transition_rows > 0) {
    out.warnings.emplace_back("saturated transition rows without posterior mass set to uniform");
  }
  if (!out.converged) out.warnings.emplace_back("EM reached max_iter before the final tolerance");
  return out;
}

}  // namespace

std::vector<Candidate> short_run_init(const Dataset& data, ModelKind model, ChainVariant variant,
                                      int n_states, const EMConfig& cfg) {
  cfg.validate();
  data.validate();
  const auto pooled = fit_pooled_logistic(data, cfg.inner);
  const auto n = static_cast<std::size_t>(cfg.n_short_starts);
  std::vector<std::optional<Candidate>> slots(n);
  parallel_for(n, cfg.threads, [&](std::size_t r) {
    Rng rng = derive_rng(cfg.seed, r);
    ParameterSet start = random_start(data, model, variant, n_states, pooled, cfg.start_spread, rng);
    try {
      Candidate c;
      c.start_index = static_cast<int>(r);
      c.run = run_em(data, std::move(start), cfg.short_run_threshold, cfg.short_max_iter, cfg);
      c.loglik = c.run.trace.back();
      const Eigen::VectorXd occ = state_occupancy(c.run.posteriors);
      c.min_occupancy = occ.minCoeff();
      c.spurious = is_spurious(occ);
      slots[r] = std::move(c);
    } catch (const Error& err) {
      if (err.code() != ErrorCode::DegenerateLikelihood) throw;
    }
  });
  std::vector<Candidate> out;
  for (auto& s : slots) {
    if (s) out.push_back(std::move(*s));
  }
  if (out.empty()) fail(ErrorCode::DegenerateLikelihood, "all random starts were degenerate");
  std::stable_sort(out.begin(), out.end(), [](const Candidate& a, const Candidate& b) {
    if (a.spurious != b.spurious) return !a.spurious;
    return a.loglik > b.loglik;
  });
  return out;
}

FitResult fit_em(const Dataset& data, ModelKind model, ChainVariant variant, int n_states,
                 const EMConfig& cfg) {
  auto candidates = short_run_init(data, model, variant, n_states, cfg);
  const std::size_t n_long = std::min(candidates.size(), static_cast<std::size_t>(cfg.n_long_runs));
  std::vector<std::optional<EMRun>> runs(n_long);
  parallel_for(n_long, cfg.threads, [&](std::size_t c) {
    const auto& cand = candidates[c];
    try {
      EMRun run = run_em(data, cand.run.theta, cfg.final_tol, cfg.max_iter, cfg);
      // Keep the full trajectory: short-run trace followed by the long run.
      std::vector<double> trace = cand.run.trace;
      trace.insert(trace.end(), run.trace.begin() + 1, run.trace.end());
      run.trace = std::move(trace);
      runs[c] = std::move(run);
    } catch (const Error& err) {
      if (err.code() != ErrorCode::DegenerateLikelihood) throw;
    }
  });
  std::optional<std::size_t> best;
  for (std::size_t c = 0; c < n_long; ++c) {
    if (runs[c] && (!best || runs[c]->trace.back() > runs[*best]->trace.back())) best = c;
  }
  if (!best) fail(ErrorCode::DegenerateLikelihood, "all long EM runs were degenerate");
  return finish(data, std::move(*runs[*best]), cfg);
}

FitResult fit_time_constant(const Dataset& data, int n_states, const EMConfig& cfg) {
  return fit_em(data, ModelKind::TimeConstant, ChainVariant::Parametric, n_states, cfg);
}

FitResult fit_from_start(const Dataset& data, const ParameterSet& start, const EMConfig& cfg) {
  cfg.validate();
  return finish(data, run_em(data, start, cfg.final_tol, cfg.max_iter, cfg), cfg);
}

}  // namespace lmdrop
