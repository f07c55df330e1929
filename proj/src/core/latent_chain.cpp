#include "core/latent_chain.hpp"

#include <cmath>

#include "core/error.hpp"

namespace lmdrop {

ChainParamsParametric ChainParamsParametric::zeros(int n_states) {
  if (n_states < 1) fail(ErrorCode::InvalidArgument, "n_states must be >= 1");
  ChainParamsParametric p;
  p.gamma = Eigen::MatrixXd::Zero(n_states - 1, 2);
  p.phi.assign(static_cast<std::size_t>(n_states), Eigen::MatrixXd::Zero(n_states - 1, 2));
  return p;
}

ChainParamsSaturated ChainParamsSaturated::uniform(int n_states, int horizon) {
  if (n_states < 1 || horizon < 1) fail(ErrorCode::InvalidArgument, "bad saturated chain shape");
  ChainParamsSaturated p;
  const double w = 1.0 / n_states;
  p.initial.assign(static_cast<std::size_t>(horizon), Eigen::VectorXd::Constant(n_states, w));
  p.transition.assign(static_cast<std::size_t>(horizon),
                      Eigen::MatrixXd::Constant(n_states, n_states, w));
  p.observed.assign(static_cast<std::size_t>(horizon), true);
  return p;
}

Eigen::VectorXd log_softmax_with_reference(const Eigen::Ref<const Eigen::VectorXd>& eta) {
  const Eigen::Index J = eta.size() + 1;
  Eigen::VectorXd full(J);
  full.head(J - 1) = eta;
  full(J - 1) = 0.0;
  const double m = full.maxCoeff();
  const double log_norm = m + std::log((full.array() - m).exp().sum());
  return full.array() - log_norm;
}

Eigen::VectorXd softmax_with_reference(const Eigen::Ref<const Eigen::VectorXd>& eta) {
  Eigen::VectorXd p = log_softmax_with_reference(eta).array().exp();
  return p / p.sum();
}

namespace {

Eigen::VectorXd linear_predictor(const Eigen::MatrixXd& coef, int s) {
  return coef.col(0) + coef.col(1) * static_cast<double>(s);
}

void check_dropout(int s) {
  if (s < 1) fail(ErrorCode::InvalidArgument, "dropout time must be >= 1");
}

}  // namespace

Eigen::VectorXd initial_probs(const ChainParamsParametric& params, int s) {
  check_dropout(s);
  return softmax_with_reference(linear_predictor(params.gamma, s));
}

Eigen::MatrixXd transition_matrix(const ChainParamsParametric& params, int s) {
  check_dropout(s);
  const int J = params.n_states();
  if (static_cast<int>(params.phi.size()) != J) {
    fail(ErrorCode::InvalidArgument, "phi must have one block per origin state");
  }
  Eigen::MatrixXd A(J, J);
  for (int k = 0; k < J; ++k) {
    A.row(k) = softmax_with_reference(linear_predictor(params.phi[static_cast<std::size_t>(k)], s))
                   .transpose();
  }
  return A;
}

ChainLaws chain_laws(const ChainParamsParametric& params, int s) {
  return {initial_probs(params, s), transition_matrix(params, s)};
}

ChainLaws chain_laws(const ChainParamsSaturated& params, int s) {
  if (s < 1 || s > params.horizon()) {
    fail(ErrorCode::InvalidArgument,
         "dropout time " + std::to_string(s) + " outside saturated strata 1.." +
             std::to_string(params.horizon()));
  }
  const auto idx = static_cast<std::size_t>(s - 1);
  if (!params.observed[idx]) {
    fail(ErrorCode::InvalidArgument,
         "saturated chain has no estimate for unseen stratum S=" + std::to_string(s));
  }
  return {params.initial[idx], params.transition[idx]};
}

}  // namespace lmdrop
