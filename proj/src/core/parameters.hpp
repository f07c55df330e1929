#pragma once

#include <Eigen/Dense>

#include <string>
#include <utility>
#include <vector>

#include "core/data_model.hpp"
#include "core/kv_io.hpp"
#include "core/latent_chain.hpp"

namespace lmdrop {

// M1: latent Markov chain whose laws depend on the dropout time.
// M2: time-constant discrete random effect with dropout-dependent class weights.
enum class ModelKind { LatentMarkov, TimeConstant };

const char* to_string(ModelKind m);
ModelKind parse_model_kind(const std::string& s);

struct EmissionParams {
  Eigen::VectorXd beta;  // p1
  Eigen::MatrixXd u;     // J x p2, row j = effects of state j
};

struct ParameterSet {
  ModelKind model = ModelKind::LatentMarkov;
  ChainVariant variant = ChainVariant::Parametric;
  EmissionParams emission;
  ChainParamsParametric parametric;  // gamma only is used by M2
  ChainParamsSaturated saturated;

  int n_states() const { return static_cast<int>(emission.u.rows()); }
  int p1() const { return static_cast<int>(emission.beta.size()); }
  int p2() const { return static_cast<int>(emission.u.cols()); }
  bool is_saturated() const {
    return model == ModelKind::LatentMarkov && variant == ChainVariant::Saturated;
  }

  static ParameterSet zeros(ModelKind model, ChainVariant variant, int n_states, int p1, int p2,
                            int horizon);
};

// Initial vector and transition matrix for a subject with dropout time s.
// M2 uses the identity transition so that a class is held for the whole history.
ChainLaws laws_for(const ParameterSet& theta, int s);

// Free-parameter vector in the canonical order:
// beta, u (state-major), gamma (category-major: intercept, slope),
// phi (origin-major, then category) for M1-parametric, or the non-reference
// saturated probabilities pi.t.j and A.t.k.j for M1-saturated.
Eigen::VectorXd pack(const ParameterSet& theta);
void unpack(ParameterSet& theta, const Eigen::Ref<const Eigen::VectorXd>& values);
std::vector<std::string> parameter_names(const ParameterSet& theta);

int param_count(ModelKind model, ChainVariant variant, int p1, int p2, int n_states, int horizon);

// Relabel states: new state a is old state perm[a]. Parametric logits are
// re-expressed against the new reference category so probabilities are unchanged.
ParameterSet permute_states(const ParameterSet& theta, const std::vector<int>& perm);
// Permutation that sorts states by ascending first state-effect component.
std::vector<int> intercept_order(const ParameterSet& theta);
ParameterSet order_states_by_intercept(const ParameterSet& theta);

std::vector<std::pair<std::string, std::string>> parameter_entries(const ParameterSet& theta);
// Reads entries written by parameter_entries into a zero-initialised set of the given shape.
ParameterSet parameters_from_entries(const KeyValues& kv, ModelKind model, ChainVariant variant,
                                     int n_states, int p1, int p2, int horizon);

}  // namespace lmdrop
