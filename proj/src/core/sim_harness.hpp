#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "core/data_model.hpp"
#include "core/em_fitter.hpp"
#include "core/latent_chain.hpp"
#include "core/parameters.hpp"
#include "core/rng.hpp"

namespace lmdrop {

enum class Scheme { Conditional, Joint };

const char* to_string(Scheme s);
Scheme parse_scheme(const std::string& s);

struct SchemeSpec {
  Scheme scheme = Scheme::Conditional;
  int n = 500;
  int horizon = 10;
  int n_states = 2;
  // conditional scheme: dropout-dependent chain
  ChainParamsParametric chain;
  // joint scheme: homogeneous chain and state-specific dropout logits
  Eigen::VectorXd initial;
  Eigen::MatrixXd transition;
  Eigen::VectorXd dropout_logits;
  double beta = 0.5;
  Eigen::VectorXd intercepts;
  std::uint64_t seed = 1;

  static SchemeSpec conditional_defaults();
  static SchemeSpec joint_defaults();
  void validate() const;
  std::vector<std::pair<std::string, std::string>> to_entries() const;
};

// Latent paths and dropout bookkeeping behind a simulated dataset. States are 0-based.
// Conditional scheme: paths cover t = 1..S_i. Joint scheme: paths cover t = 1..T and
// dropout_fired records whether the dropout indicator fired (at t = S_i).
struct GroundTruth {
  std::vector<std::vector<int>> states;
  std::vector<int> dropout;
  std::vector<bool> dropout_fired;
};

struct SimulatedData {
  Dataset data;
  GroundTruth truth;
};

// Design used by both schemes: x1 = (x), x2 = (1).
ModelConfig simulation_model_config(int n_states);

SimulatedData simulate_conditional(const SchemeSpec& spec);
SimulatedData simulate_joint(const SchemeSpec& spec);
SimulatedData simulate(const SchemeSpec& spec);

void write_ground_truth(const GroundTruth& truth, const Dataset& data, const std::filesystem::path& path);

// Draws latent paths from laws_for(theta, S_i) and fresh responses, keeping each
// subject's dropout time and covariates. Used by the parametric bootstrap.
Dataset simulate_from_model(const Dataset& design, const ParameterSet& theta, Rng& rng,
                            std::vector<std::vector<int>>* states = nullptr);

struct ModelReplication {
  ModelKind model = ModelKind::LatentMarkov;
  std::vector<double> estimates;  // successful beta-hat values in replicate order
  int failed = 0;
  double bias = 0.0;
  double sd = 0.0;   // population form, so that mse == bias^2 + sd^2
  double mse = 0.0;
  bool valid = true;  // false when more than 20% of fits failed
};

struct ReplicationReport {
  SchemeSpec spec;
  int reps = 0;
  std::vector<ModelReplication> models;
};

ReplicationReport run_replications(const SchemeSpec& spec, int reps, const std::vector<ModelKind>& models,
                                   const EMConfig& em, int threads);
void summarize(ModelReplication& m, double truth, int reps);
void write_replication_report(const ReplicationReport& report, const std::filesystem::path& path);

}  // namespace lmdrop
