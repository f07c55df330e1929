#include "core/parameters.hpp"

#include <algorithm>
#include <numeric>

#include "core/error.hpp"

namespace lmdrop {

const char* to_string(ModelKind m) {
  return m == ModelKind::LatentMarkov ? "m1" : "m2";
}

ModelKind parse_model_kind(const std::string& s) {
  const std::string t = trim(s);
  if (t == "m1" || t == "M1") return ModelKind::LatentMarkov;
  if (t == "m2" || t == "M2") return ModelKind::TimeConstant;
  fail(ErrorCode::Parse, "unknown model '" + s + "' (expected m1|m2)");
}

ParameterSet ParameterSet::zeros(ModelKind model, ChainVariant variant, int n_states, int p1,
                                 int p2, int horizon) {
  if (n_states < 1 || p1 < 0 || p2 < 0) fail(ErrorCode::InvalidArgument, "bad parameter shape");
  ParameterSet t;
  t.model = model;
  t.variant = model == ModelKind::TimeConstant ? ChainVariant::Parametric : variant;
  t.emission.beta = Eigen::VectorXd::Zero(p1);
  t.emission.u = Eigen::MatrixXd::Zero(n_states, p2);
  t.parametric = ChainParamsParametric::zeros(n_states);
  if (t.is_saturated()) t.saturated = ChainParamsSaturated::uniform(n_states, horizon);
  return t;
}

ChainLaws laws_for(const ParameterSet& theta, int s) {
  if (theta.model == ModelKind::TimeConstant) {
    const int J = theta.n_states();
    return {initial_probs(theta.parametric, s), Eigen::MatrixXd::Identity(J, J)};
  }
  if (theta.variant == ChainVariant::Saturated) return chain_laws(theta.saturated, s);
  return chain_laws(theta.parametric, s);
}

int param_count(ModelKind model, ChainVariant variant, int p1, int p2, int n_states, int horizon) {
  const int J = n_states;
  const int emission = p1 + J * p2;
  if (model == ModelKind::TimeConstant) return emission + 2 * (J - 1);
  if (variant == ChainVariant::Saturated) return emission + horizon * (J - 1) + horizon * J * (J - 1);
  return emission + 2 * (J - 1) + 2 * J * (J - 1);
}

namespace {

// Visits every free parameter in canonical order with its name and a reference to storage.
template <typename Theta, typename Fn>
void visit(Theta& theta, Fn&& fn) {
  const int J = theta.n_states();
  for (int m = 0; m < theta.p1(); ++m) fn("beta." + std::to_string(m + 1), theta.emission.beta(m));
  for (int j = 0; j < J; ++j) {
    for (int m = 0; m < theta.p2(); ++m) {
      fn("u." + std::to_string(j + 1) + "." + std::to_string(m + 1), theta.emission.u(j, m));
    }
  }
  if (theta.is_saturated()) {
    auto& sat = theta.saturated;
    for (int t = 0; t < sat.horizon(); ++t) {
      for (int j = 0; j + 1 < J; ++j) {
        fn("pi." + std::to_string(t + 1) + "." + std::to_string(j + 1),
           sat.initial[static_cast<std::size_t>(t)](j));
      }
    }
    for (int t = 0; t < sat.horizon(); ++t) {
      for (int k = 0; k < J; ++k) {
        for (int j = 0; j + 1 < J; ++j) {
          fn("A." + std::to_string(t + 1) + "." + std::to_string(k + 1) + "." + std::to_string(j + 1),
             sat.transition[static_cast<std::size_t>(t)](k, j));
        }
      }
    }
    return;
  }
  for (int j = 0; j + 1 < J; ++j) {
    for (int c = 0; c < 2; ++c) {
      fn("gamma." + std::to_string(j + 1) + "." + std::to_string(c), theta.parametric.gamma(j, c));
    }
  }
  if (theta.model == ModelKind::TimeConstant) return;
  for (int k = 0; k < J; ++k) {
    for (int j = 0; j + 1 < J; ++j) {
      for (int c = 0; c < 2; ++c) {
        fn("phi." + std::to_string(k + 1) + "." + std::to_string(j + 1) + "." + std::to_string(c),
           theta.parametric.phi[static_cast<std::size_t>(k)](j, c));
      }
    }
  }
}

// Reference entries of saturated tables are implied by the simplex constraint.
void complete_saturated(ChainParamsSaturated& sat) {
  for (auto& v : sat.initial) {
    const auto J = v.size();
    v(J - 1) = 1.0 - v.head(J - 1).sum();
  }
  for (auto& A : sat.transition) {
    const auto J = A.cols();
    for (Eigen::Index k = 0; k < A.rows(); ++k) A(k, J - 1) = 1.0 - A.row(k).head(J - 1).sum();
  }
}

}  // namespace

Eigen::VectorXd pack(const ParameterSet& theta) {
  std::vector<double> values;
  visit(theta, [&](const std::string&, const double& v) { values.push_back(v); });
  return Eigen::Map<Eigen::VectorXd>(values.data(), static_cast<Eigen::Index>(values.size()));
}

void unpack(ParameterSet& theta, const Eigen::Ref<const Eigen::VectorXd>& values) {
  Eigen::Index i = 0;
  visit(theta, [&](const std::string&, double& v) {
    if (i >= values.size()) fail(ErrorCode::InvalidArgument, "parameter vector too short");
    v = values(i++);
  });
  if (i != values.size()) fail(ErrorCode::InvalidArgument, "parameter vector too long");
  if (theta.is_saturated()) complete_saturated(theta.saturated);
}

std::vector<std::string> parameter_names(const ParameterSet& theta) {
  std::vector<std::string> names;
  visit(theta, [&](const std::string& name, const double&) { names.push_back(name); });
  return names;
}

ParameterSet permute_states(const ParameterSet& theta, const std::vector<int>& perm) {
  const int J = theta.n_states();
  if (static_cast<int>(perm.size()) != J) fail(ErrorCode::InvalidArgument, "permutation size mismatch");
  {
    std::vector<int> sorted = perm;
    std::sort(sorted.begin(), sorted.end());
    for (int j = 0; j < J; ++j) {
      if (sorted[static_cast<std::size_t>(j)] != j) fail(ErrorCode::InvalidArgument, "not a permutation");
    }
  }
  ParameterSet out = theta;
  for (int a = 0; a < J; ++a) out.emission.u.row(a) = theta.emission.u.row(perm[static_cast<std::size_t>(a)]);

  // Full J x 2 logit coefficients (reference row zero), permuted, then re-referenced.
  auto relabel = [&](const Eigen::MatrixXd& coef) {
    Eigen::MatrixXd full = Eigen::MatrixXd::Zero(J, 2);
    full.topRows(J - 1) = coef;
    Eigen::MatrixXd permuted(J, 2);
    for (int a = 0; a < J; ++a) permuted.row(a) = full.row(perm[static_cast<std::size_t>(a)]);
    Eigen::MatrixXd result(J - 1, 2);
    for (int a = 0; a + 1 < J; ++a) result.row(a) = permuted.row(a) - permuted.row(J - 1);
    return result;
  };
  out.parametric.gamma = relabel(theta.parametric.gamma);
  if (theta.model == ModelKind::LatentMarkov && !theta.is_saturated()) {
    for (int a = 0; a < J; ++a) {
      out.parametric.phi[static_cast<std::size_t>(a)] =
          relabel(theta.parametric.phi[static_cast<std::size_t>(perm[static_cast<std::size_t>(a)])]);
    }
  }
  if (theta.is_saturated()) {
    for (std::size_t t = 0; t < theta.saturated.initial.size(); ++t) {
      for (int a = 0; a < J; ++a) {
        out.saturated.initial[t](a) = theta.saturated.initial[t](perm[static_cast<std::size_t>(a)]);
        for (int b = 0; b < J; ++b) {
          out.saturated.transition[t](a, b) = theta.saturated.transition[t](
              perm[static_cast<std::size_t>(a)], perm[static_cast<std::size_t>(b)]);
        }
      }
    }
  }
  return out;
}

std::vector<int> intercept_order(const ParameterSet& theta) {
  std::vector<int> perm(static_cast<std::size_t>(theta.n_states()));
  std::iota(perm.begin(), perm.end(), 0);
  if (theta.p2() == 0) return perm;
  std::stable_sort(perm.begin(), perm.end(), [&](int a, int b) {
    return theta.emission.u(a, 0) < theta.emission.u(b, 0);
  });
  return perm;
}

ParameterSet order_states_by_intercept(const ParameterSet& theta) {
  return permute_states(theta, intercept_order(theta));
}

std::vector<std::pair<std::string, std::string>> parameter_entries(const ParameterSet& theta) {
  std::vector<std::pair<std::string, std::string>> out;
  visit(theta, [&](const std::string& name, const double& v) { out.emplace_back(name, format_double(v)); });
  return out;
}

ParameterSet parameters_from_entries(const KeyValues& kv, ModelKind model, ChainVariant variant,
                                     int n_states, int p1, int p2, int horizon) {
  ParameterSet theta = ParameterSet::zeros(model, variant, n_states, p1, p2, horizon);
  std::size_t used = 0;
  visit(theta, [&](const std::string& name, double& v) {
    const auto it = kv.find(name);
    if (it == kv.end()) fail(ErrorCode::Parse, "missing parameter '" + name + "'");
    v = parse_double(it->second, name);
    ++used;
  });
  if (used != kv.size()) fail(ErrorCode::Parse, "parameter file has unexpected entries");
  if (theta.is_saturated()) complete_saturated(theta.saturated);
  return theta;
}

}  // namespace lmdrop
