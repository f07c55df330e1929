#pragma once

#include <Eigen/Dense>

#include <vector>

#include "core/data_model.hpp"
#include "core/latent_chain.hpp"
#include "core/parameters.hpp"

namespace lmdrop {

// Smoothed posteriors for one subject. xi(t, j) = Pr(state j at time t+1 | y_i);
// zeta[t](k, j) = Pr(state k at time t+1, state j at time t+2 | y_i), t = 0..S-2.
struct SubjectPosterior {
  Eigen::MatrixXd xi;
  std::vector<Eigen::MatrixXd> zeta;
};

struct Posteriors {
  std::vector<SubjectPosterior> subjects;
  int n_states() const {
    return subjects.empty() ? 0 : static_cast<int>(subjects.front().xi.cols());
  }
};

struct LogLikelihood {
  double total = 0.0;
  std::vector<double> per_subject;
};

double inverse_logit(double eta);
// Bernoulli-logit mass of y given the linear predictor.
double emission_prob(int y, double eta);
double emission_prob(int y, const Eigen::Ref<const Eigen::RowVectorXd>& x1,
                     const Eigen::Ref<const Eigen::RowVectorXd>& x2, const EmissionParams& em,
                     int state);
// S x J matrix of emission probabilities f(y_it | state j).
Eigen::MatrixXd emission_matrix(const SubjectPanel& panel, const EmissionParams& em);

// Forward variables normalised per time; loglik = sum(log(scale)).
struct ScaledForward {
  Eigen::MatrixXd alpha;  // S x J, each row sums to 1
  Eigen::VectorXd scale;  // S
};
ScaledForward scaled_forward(const Eigen::MatrixXd& emissions, const ChainLaws& laws);

struct SubjectFit {
  double loglik = 0.0;
  SubjectPosterior posterior;
};

// Throws ErrorCode::DegenerateLikelihood when a forward scale constant vanishes.
SubjectFit forward_backward(const SubjectPanel& panel, const ChainLaws& laws, const EmissionParams& em);
double forward_loglik(const SubjectPanel& panel, const ChainLaws& laws, const EmissionParams& em);

// Enumerates all J^S latent trajectories. Guarded at 10^6 trajectories.
double brute_force_loglik(const SubjectPanel& panel, const ChainLaws& laws, const EmissionParams& em);

LogLikelihood conditional_loglik(const Dataset& data, const ParameterSet& theta);

struct EStepResult {
  Posteriors posteriors;
  LogLikelihood loglik;
};
EStepResult e_step(const Dataset& data, const ParameterSet& theta);

// Gradient of the conditional log-likelihood in pack() order via the Fisher
// identity (expected complete-data score at the current posteriors).
// Not defined for the saturated chain variant.
Eigen::VectorXd score(const Dataset& data, const ParameterSet& theta);
Eigen::VectorXd score_from_posteriors(const Dataset& data, const ParameterSet& theta,
                                      const Posteriors& posteriors);

}  // namespace lmdrop
