#include <doctest.h>

#include "core/error.hpp"
#include "core/parameters.hpp"
#include "support.hpp"

using namespace lmdrop;
using namespace testsupport;

TEST_CASE("parameter counts") {
  CHECK(param_count(ModelKind::LatentMarkov, ChainVariant::Parametric, 5, 1, 2, 3) == 13);
  CHECK(param_count(ModelKind::LatentMarkov, ChainVariant::Parametric, 5, 1, 3, 3) == 24);
  CHECK(param_count(ModelKind::LatentMarkov, ChainVariant::Parametric, 5, 1, 4, 3) == 39);
  CHECK(param_count(ModelKind::TimeConstant, ChainVariant::Parametric, 5, 1, 2, 3) == 9);
  CHECK(param_count(ModelKind::TimeConstant, ChainVariant::Parametric, 5, 1, 3, 3) == 12);
  CHECK(param_count(ModelKind::TimeConstant, ChainVariant::Parametric, 5, 1, 4, 3) == 15);
  CHECK(param_count(ModelKind::LatentMarkov, ChainVariant::Saturated, 1, 1, 2, 10) == 3 + 10 + 20);
  CHECK(param_count(ModelKind::LatentMarkov, ChainVariant::Parametric, 1, 1, 1, 10) == 2);
}

TEST_CASE("pack length equals the parameter count for every shape") {
  Rng rng(21);
  for (auto model : {ModelKind::LatentMarkov, ModelKind::TimeConstant}) {
    for (auto variant : {ChainVariant::Parametric, ChainVariant::Saturated}) {
      for (int J = 1; J <= 4; ++J) {
        const auto th = random_theta(rng, model, variant, J, 2, 2, 4);
        const auto v = pack(th);
        const auto effective = model == ModelKind::TimeConstant ? ChainVariant::Parametric : variant;
        CHECK(v.size() == param_count(model, effective, 2, 2, J, 4));
        CHECK(parameter_names(th).size() == static_cast<std::size_t>(v.size()));
        ParameterSet back = ParameterSet::zeros(model, variant, J, 2, 2, 4);
        unpack(back, v);
        CHECK(pack(back) == v);
      }
    }
  }
}

TEST_CASE("parameter names follow the text layout") {
  auto th = ParameterSet::zeros(ModelKind::LatentMarkov, ChainVariant::Parametric, 2, 1, 1, 10);
  const std::vector<std::string> expected{"beta.1",    "u.1.1",     "u.2.1",     "gamma.1.0", "gamma.1.1",
                                          "phi.1.1.0", "phi.1.1.1", "phi.2.1.0", "phi.2.1.1"};
  CHECK(parameter_names(th) == expected);
  auto sat = ParameterSet::zeros(ModelKind::LatentMarkov, ChainVariant::Saturated, 2, 0, 1, 2);
  const std::vector<std::string> sat_names{"u.1.1", "u.2.1", "pi.1.1", "pi.2.1",
                                           "A.1.1.1", "A.1.2.1", "A.2.1.1", "A.2.2.1"};
  CHECK(parameter_names(sat) == sat_names);
}

TEST_CASE("entries round trip") {
  Rng rng(22);
  for (auto variant : {ChainVariant::Parametric, ChainVariant::Saturated}) {
    const auto th = random_theta(rng, ModelKind::LatentMarkov, variant, 3, 2, 1, 5);
    const auto entries = parameter_entries(th);
    const auto back = parameters_from_entries(KeyValues(entries.begin(), entries.end()), ModelKind::LatentMarkov,
                                              variant, 3, 2, 1, 5);
    CHECK(pack(back) == pack(th));
    if (variant == ChainVariant::Saturated) {
      // the reference entry is rebuilt as one minus the rest, so allow rounding
      for (int t = 0; t < 5; ++t) CHECK((back.saturated.initial[t] - th.saturated.initial[t]).cwiseAbs().maxCoeff() <= 1e-14);
    }
  }
  KeyValues missing{{"beta.1", "0"}};
  CHECK_THROWS_AS(parameters_from_entries(missing, ModelKind::TimeConstant, ChainVariant::Parametric, 1, 1, 1, 3),
                  Error);
}

TEST_CASE("ordering by intercept") {
  Rng rng(23);
  const auto th = random_theta(rng, ModelKind::LatentMarkov, ChainVariant::Parametric, 4, 1, 1, 5);
  const auto ordered = order_states_by_intercept(th);
  for (int j = 0; j + 1 < 4; ++j) CHECK(ordered.emission.u(j, 0) <= ordered.emission.u(j + 1, 0));
  CHECK_THROWS_AS(permute_states(th, {0, 0, 1, 2}), Error);
}
