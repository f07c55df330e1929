#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "core/data_model.hpp"
#include "core/em_fitter.hpp"
#include "core/likelihood.hpp"
#include "core/parameters.hpp"

namespace lmdrop {

// n is the number of subjects.
struct CriteriaRow {
  double loglik = 0.0;
  int k = 0;
  int n = 0;
  double aic = 0.0;
  double aic3 = 0.0;
  std::optional<double> aicc;  // undefined when n <= k + 1
  std::optional<double> aicu;
  double bic = 0.0;
};

// Throws ErrorCode::InvalidArgument when n <= k + 1.
CriteriaRow information_criteria(double loglik, int k, int n);
// Same formulas, leaving AICc/AICu empty instead of throwing.
CriteriaRow criteria_row(double loglik, int k, int n);

struct CriteriaTableRow {
  ModelKind model = ModelKind::LatentMarkov;
  int n_states = 0;
  CriteriaRow row;
};
// Columns: model,J,k,loglik,AIC,AIC3,AICc,AICu,BIC plus a best_by column naming
// the criteria each row minimises.
void write_criteria_table(const std::vector<CriteriaTableRow>& rows, std::ostream& out);
void write_criteria_table(const std::vector<CriteriaTableRow>& rows, const std::filesystem::path& path);

// Goodness-of-classification index over observed times; requires J >= 2.
double classification_index(const Posteriors& posteriors, int n_states);

struct Decoding {
  std::vector<std::vector<int>> states;  // 0-based, per subject and observed time
  std::vector<std::vector<bool>> ties;
  int n_ties = 0;
};
// Per-time argmax of the smoothed posteriors; ties go to the lowest state index.
Decoding local_decode(const Posteriors& posteriors);
// J x T counts of the decoded state at t = S_i, by dropout time.
Eigen::MatrixXi attrition_table(const Dataset& data, const Decoding& decoding, int n_states);
// T x J mean of xi over subjects still observed at t; rows with nobody at risk are NaN.
Eigen::MatrixXd average_state_probs(const Posteriors& posteriors, int horizon);

void write_decoded_states(const Dataset& data, const Decoding& decoding, const std::filesystem::path& path);
void write_attrition_table(const Eigen::MatrixXi& table, const std::filesystem::path& path);
void write_average_state_probs(const Eigen::MatrixXd& probs, const std::filesystem::path& path);
void write_posteriors(const Dataset& data, const Posteriors& posteriors, const std::filesystem::path& path);

struct BootstrapOptions {
  int B = 200;
  std::uint64_t seed = 1;
  int threads = 1;
  bool resample_dropout = false;  // resample subjects (S_i with their covariates) instead of conditioning
  EMConfig em;
};

struct BootstrapResult {
  int B = 0;
  std::vector<std::string> names;
  Eigen::VectorXd estimate;             // the fitted parameters being bootstrapped
  Eigen::MatrixXd replicate_estimates;  // B x dim, NaN rows for failed replicates
  Eigen::VectorXd se;
  int n_failed = 0;
  std::vector<std::string> warnings;
};

BootstrapResult parametric_bootstrap(const Dataset& data, const ParameterSet& theta_hat,
                                     const BootstrapOptions& opts);
void write_bootstrap_table(const BootstrapResult& result, const std::filesystem::path& path);

}  // namespace lmdrop
