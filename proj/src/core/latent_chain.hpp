#pragma once

#include <Eigen/Dense>

#include <vector>

namespace lmdrop {

// Multinomial-logit chain laws driven by the dropout time s. Category J (the last
// state) is the reference with its linear predictor fixed at zero.
struct ChainParamsParametric {
  Eigen::MatrixXd gamma;             // (J-1) x 2: (intercept, slope in s) per category
  std::vector<Eigen::MatrixXd> phi;  // J origin rows, each (J-1) x 2

  static ChainParamsParametric zeros(int n_states);
  int n_states() const { return static_cast<int>(gamma.rows()) + 1; }
};

// Stratum-specific probability tables, one per dropout time t = 1..T.
struct ChainParamsSaturated {
  std::vector<Eigen::VectorXd> initial;     // T entries of length J
  std::vector<Eigen::MatrixXd> transition;  // T entries of J x J, row-stochastic
  std::vector<bool> observed;               // stratum had subjects when estimated

  static ChainParamsSaturated uniform(int n_states, int horizon);
  int n_states() const { return initial.empty() ? 0 : static_cast<int>(initial.front().size()); }
  int horizon() const { return static_cast<int>(initial.size()); }
};

struct ChainLaws {
  Eigen::VectorXd initial;
  Eigen::MatrixXd transition;
};

// Softmax over J categories given the J-1 non-reference linear predictors.
// Evaluated in the log domain with max-subtraction.
Eigen::VectorXd softmax_with_reference(const Eigen::Ref<const Eigen::VectorXd>& eta);
// log of softmax_with_reference.
Eigen::VectorXd log_softmax_with_reference(const Eigen::Ref<const Eigen::VectorXd>& eta);

Eigen::VectorXd initial_probs(const ChainParamsParametric& params, int s);
Eigen::MatrixXd transition_matrix(const ChainParamsParametric& params, int s);

ChainLaws chain_laws(const ChainParamsParametric& params, int s);
ChainLaws chain_laws(const ChainParamsSaturated& params, int s);

}  // namespace lmdrop
