#pragma once

#include <Eigen/Dense>

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace lmdrop {

// One subject's observed history. Row t of x1/x2 holds the covariates at time t+1;
// the subject drops out after responses.size() occasions.
struct SubjectPanel {
  std::string subject_id;
  std::vector<int> responses;
  Eigen::MatrixXd x1;  // S x p1
  Eigen::MatrixXd x2;  // S x p2

  int dropout_time() const { return static_cast<int>(responses.size()); }
};

struct Dataset {
  std::vector<SubjectPanel> panels;
  int horizon = 0;
  int p1 = 0;
  int p2 = 0;
  std::vector<std::string> x1_names;
  std::vector<std::string> x2_names;  // "(intercept)" first when a random intercept is used

  std::size_t size() const { return panels.size(); }
  std::size_t total_observations() const;
  std::vector<int> dropout_times() const;
  // count[t-1] = number of subjects with S_i = t, t = 1..horizon.
  std::vector<int> dropout_counts() const;
  void validate() const;
};

enum class ChainVariant { Parametric, Saturated };

const char* to_string(ChainVariant v);
ChainVariant parse_chain_variant(const std::string& s);

inline constexpr const char* kInterceptName = "(intercept)";

struct ModelConfig {
  int n_states = 2;
  ChainVariant chain_variant = ChainVariant::Parametric;
  std::vector<std::string> fixed_columns;
  std::vector<std::string> state_columns;
  bool random_intercept = true;
  std::optional<int> horizon;
  std::string subject_column = "subject";
  std::string time_column = "time";
  std::string response_column = "y";

  void validate() const;
  std::vector<std::pair<std::string, std::string>> to_entries() const;
};

ModelConfig parse_model_config(const std::map<std::string, std::string>& kv);
ModelConfig load_model_config(const std::filesystem::path& path);

// S_i = T - sum_t R_it for a monotone dropout indicator sequence.
int derive_dropout(std::span<const int> indicators);
// Inverse of derive_dropout: indicators of length T with S zeros followed by ones.
std::vector<int> dropout_indicators(int dropout_time, int horizon);

using CovariateRow = std::map<std::string, double>;

std::pair<Eigen::VectorXd, Eigen::VectorXd> split_design(const CovariateRow& row,
                                                         const ModelConfig& config);

// Long-format delimited text with a header row; comma or tab separated.
Dataset load_dataset(const std::filesystem::path& path, const ModelConfig& config);
Dataset parse_dataset(std::istream& in, const ModelConfig& config,
                      const std::string& source_name = "<input>");

// Writes the raw covariate columns (the synthetic intercept column is omitted).
void write_dataset(const Dataset& data, const std::filesystem::path& path);
void write_dataset(const Dataset& data, std::ostream& out);

bool operator==(const SubjectPanel& a, const SubjectPanel& b);
bool operator==(const Dataset& a, const Dataset& b);

}  // namespace lmdrop
