#include <doctest.h>

#include <cmath>

#include "core/error.hpp"
#include "core/latent_chain.hpp"
#include "support.hpp"

using namespace lmdrop;
using doctest::Approx;

TEST_CASE("initial probabilities") {
  auto p = ChainParamsParametric::zeros(2);
  CHECK(initial_probs(p, 3)(0) == Approx(0.5));

  p.gamma << 2.0, -0.5;
  const auto at4 = initial_probs(p, 4);
  CHECK(at4(0) == Approx(0.5).epsilon(1e-15));
  CHECK(at4(1) == Approx(0.5).epsilon(1e-15));
  const auto at2 = initial_probs(p, 2);
  const double e = std::exp(1.0);
  CHECK(at2(0) == Approx(e / (1 + e)).epsilon(1e-14));
  CHECK(at2(1) == Approx(1 / (1 + e)).epsilon(1e-14));
  CHECK(at2(0) == Approx(0.7311).epsilon(1e-4));
}

TEST_CASE("transition rows") {
  const auto zero3 = transition_matrix(ChainParamsParametric::zeros(3), 5);
  for (int k = 0; k < 3; ++k) {
    for (int j = 0; j < 3; ++j) CHECK(zero3(k, j) == Approx(1.0 / 3.0));
  }
  auto p = ChainParamsParametric::zeros(2);
  p.phi[0] << 5.0, -1.5;
  p.phi[1] << 5.0, -0.75;
  const double e2 = std::exp(2.0);
  CHECK(transition_matrix(p, 2)(0, 0) == Approx(e2 / (1 + e2)).epsilon(1e-14));
  CHECK(transition_matrix(p, 2)(0, 1) == Approx(0.1192).epsilon(1e-3));
  CHECK(transition_matrix(p, 4)(1, 0) == Approx(0.8808).epsilon(1e-4));
}

TEST_CASE("laws depend only on s and sum to one") {
  Rng rng(3);
  for (int rep = 0; rep < 200; ++rep) {
    const int J = 1 + rep % 4;
    auto th = testsupport::random_theta(rng, ModelKind::LatentMarkov, ChainVariant::Parametric, J, 1, 1, 10, 4.0);
    for (int s = 1; s <= 10; ++s) {
      const auto a = chain_laws(th.parametric, s);
      const auto b = chain_laws(th.parametric, s);
      CHECK(a.initial == b.initial);
      CHECK(std::abs(a.initial.sum() - 1.0) <= 1e-12);
      for (int k = 0; k < J; ++k) CHECK(std::abs(a.transition.row(k).sum() - 1.0) <= 1e-12);
    }
  }
}

TEST_CASE("zero slopes give dropout-independent laws") {
  Rng rng(4);
  auto th = testsupport::random_theta(rng, ModelKind::LatentMarkov, ChainVariant::Parametric, 3, 1, 1, 10);
  th.parametric.gamma.col(1).setZero();
  for (auto& phi : th.parametric.phi) phi.col(1).setZero();
  const auto ref = chain_laws(th.parametric, 1);
  for (int s = 2; s <= 10; ++s) {
    const auto l = chain_laws(th.parametric, s);
    CHECK((l.initial - ref.initial).cwiseAbs().maxCoeff() == 0.0);
    CHECK((l.transition - ref.transition).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("softmax is shift invariant and overflow safe") {
  Rng rng(5);
  for (int rep = 0; rep < 500; ++rep) {
    const int J = 2 + rep % 4;
    Eigen::VectorXd eta(J - 1);
    for (int j = 0; j < J - 1; ++j) eta(j) = testsupport::uniform(rng, -30, 30);
    const double c = testsupport::uniform(rng, -50, 50);
    // Shifting every category (the reference included) by c: re-express against the reference.
    Eigen::VectorXd full(J);
    full.head(J - 1) = eta.array() + c;
    full(J - 1) = c;
    const Eigen::VectorXd shifted = full.head(J - 1).array() - full(J - 1);
    const auto p = softmax_with_reference(eta);
    const auto q = softmax_with_reference(shifted);
    CHECK((p - q).cwiseAbs().maxCoeff() <= 1e-12);
    // Brute-force softmax from the shifted predictors.
    Eigen::VectorXd brute = (full.array() - full.maxCoeff()).exp();
    brute /= brute.sum();
    CHECK((p - brute).cwiseAbs().maxCoeff() <= 1e-12);
  }
  Eigen::VectorXd huge(2);
  huge << 800.0, -800.0;
  const auto p = softmax_with_reference(huge);
  CHECK(p.allFinite());
  CHECK(p(0) == Approx(1.0));
  CHECK(std::isfinite(log_softmax_with_reference(huge)(1)));
}

TEST_CASE("saturated lookup and degenerate chains") {
  auto sat = ChainParamsSaturated::uniform(2, 3);
  sat.initial[1] = Eigen::Vector2d(0.3, 0.7);
  const auto l = chain_laws(sat, 2);
  CHECK(l.initial(0) == 0.3);
  CHECK(l.initial(1) == 0.7);
  CHECK_THROWS_AS(chain_laws(sat, 4), Error);
  sat.observed[2] = false;
  CHECK_THROWS_AS(chain_laws(sat, 3), Error);

  const auto one = chain_laws(ChainParamsParametric::zeros(1), 4);
  CHECK(one.initial.size() == 1);
  CHECK(one.initial(0) == 1.0);
  CHECK(one.transition(0, 0) == 1.0);
}
