// Random instances shared by the unit tests and the acceptance runner.
#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <random>
#include <vector>

#include "core/data_model.hpp"
#include "core/latent_chain.hpp"
#include "core/likelihood.hpp"
#include "core/parameters.hpp"
#include "core/rng.hpp"

namespace testsupport {

using namespace lmdrop;

inline double uniform(Rng& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline Eigen::VectorXd random_simplex(Rng& rng, int J) {
  Eigen::VectorXd p(J);
  std::gamma_distribution<double> g(1.0, 1.0);
  for (int j = 0; j < J; ++j) p(j) = g(rng) + 1e-3;
  return p / p.sum();
}

inline ChainLaws random_laws(Rng& rng, int J) {
  ChainLaws laws;
  laws.initial = random_simplex(rng, J);
  laws.transition.resize(J, J);
  for (int k = 0; k < J; ++k) laws.transition.row(k) = random_simplex(rng, J).transpose();
  return laws;
}

inline SubjectPanel random_panel(Rng& rng, int S, int p1, int p2, bool intercept = true) {
  SubjectPanel p;
  p.subject_id = "s";
  std::normal_distribution<double> normal(0.0, 1.0);
  std::bernoulli_distribution coin(0.5);
  p.x1.resize(S, p1);
  p.x2.resize(S, p2);
  for (int t = 0; t < S; ++t) {
    p.responses.push_back(coin(rng) ? 1 : 0);
    for (int c = 0; c < p1; ++c) p.x1(t, c) = normal(rng);
    for (int c = 0; c < p2; ++c) p.x2(t, c) = (intercept && c == 0) ? 1.0 : normal(rng);
  }
  return p;
}

inline EmissionParams random_emission(Rng& rng, int J, int p1, int p2, double scale = 1.5) {
  EmissionParams em;
  em.beta.resize(p1);
  em.u.resize(J, p2);
  for (int c = 0; c < p1; ++c) em.beta(c) = uniform(rng, -scale, scale);
  for (int j = 0; j < J; ++j) {
    for (int c = 0; c < p2; ++c) em.u(j, c) = uniform(rng, -scale, scale);
  }
  return em;
}

// Random dataset with dropout times uniform on 1..T.
inline Dataset random_dataset(Rng& rng, int n, int T, int p1, int p2) {
  Dataset d;
  d.horizon = T;
  d.p1 = p1;
  d.p2 = p2;
  for (int c = 0; c < p1; ++c) d.x1_names.push_back("a" + std::to_string(c));
  for (int c = 0; c < p2; ++c) d.x2_names.push_back(c == 0 ? kInterceptName : "b" + std::to_string(c));
  std::uniform_int_distribution<int> s_dist(1, T);
  for (int i = 0; i < n; ++i) {
    auto p = random_panel(rng, s_dist(rng), p1, p2);
    p.subject_id = std::to_string(i + 1);
    d.panels.push_back(std::move(p));
  }
  return d;
}

// Random parameters for any model/variant; the slope terms are kept small so that the
// chain laws stay away from 0/1 over the dropout range.
inline ParameterSet random_theta(Rng& rng, ModelKind model, ChainVariant variant, int J, int p1, int p2,
                                 int T, double scale = 1.0) {
  ParameterSet th = ParameterSet::zeros(model, variant, J, p1, p2, T);
  th.emission = random_emission(rng, J, p1, p2, scale);
  for (int j = 0; j + 1 < J; ++j) {
    th.parametric.gamma(j, 0) = uniform(rng, -scale, scale);
    th.parametric.gamma(j, 1) = uniform(rng, -0.3, 0.3);
    for (int k = 0; k < J; ++k) {
      th.parametric.phi[static_cast<std::size_t>(k)](j, 0) = uniform(rng, -scale, scale) + (k == j ? 1.0 : 0.0);
      th.parametric.phi[static_cast<std::size_t>(k)](j, 1) = uniform(rng, -0.3, 0.3);
    }
  }
  if (th.is_saturated()) {
    for (int t = 0; t < T; ++t) {
      const auto ti = static_cast<std::size_t>(t);
      th.saturated.initial[ti] = random_simplex(rng, J);
      for (int k = 0; k < J; ++k) th.saturated.transition[ti].row(k) = random_simplex(rng, J).transpose();
    }
  }
  return th;
}

// log-sum-exp forward recursion, independent of the scaled implementation.
inline double logsumexp_loglik(const SubjectPanel& panel, const ChainLaws& laws, const EmissionParams& em) {
  const int J = static_cast<int>(em.u.rows());
  const int S = panel.dropout_time();
  auto log_f = [&](int t, int j) {
    const double eta = panel.x1.row(t).dot(em.beta) + panel.x2.row(t).dot(em.u.row(j));
    const double p = 1.0 / (1.0 + std::exp(-eta));
    return std::log(panel.responses[static_cast<std::size_t>(t)] == 1 ? p : 1.0 - p);
  };
  std::vector<double> la(static_cast<std::size_t>(J));
  for (int j = 0; j < J; ++j) la[static_cast<std::size_t>(j)] = std::log(laws.initial(j)) + log_f(0, j);
  for (int t = 1; t < S; ++t) {
    std::vector<double> next(static_cast<std::size_t>(J));
    for (int j = 0; j < J; ++j) {
      double m = -INFINITY;
      for (int k = 0; k < J; ++k) m = std::max(m, la[static_cast<std::size_t>(k)] + std::log(laws.transition(k, j)));
      double s = 0.0;
      for (int k = 0; k < J; ++k) s += std::exp(la[static_cast<std::size_t>(k)] + std::log(laws.transition(k, j)) - m);
      next[static_cast<std::size_t>(j)] = m + std::log(s) + log_f(t, j);
    }
    la = next;
  }
  double m = -INFINITY;
  for (double v : la) m = std::max(m, v);
  double s = 0.0;
  for (double v : la) s += std::exp(v - m);
  return m + std::log(s);
}

// Central differences of the total log-likelihood in pack() order.
inline Eigen::VectorXd numeric_score(const Dataset& data, const ParameterSet& theta, double h = 1e-6) {
  const Eigen::VectorXd x = pack(theta);
  Eigen::VectorXd g(x.size());
  ParameterSet work = theta;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    Eigen::VectorXd xp = x, xm = x;
    xp(i) += h;
    xm(i) -= h;
    unpack(work, xp);
    const double fp = conditional_loglik(data, work).total;
    unpack(work, xm);
    const double fm = conditional_loglik(data, work).total;
    g(i) = (fp - fm) / (2.0 * h);
  }
  return g;
}

// Relative error measure used for gradient comparisons.
inline double max_rel_error(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  double worst = 0.0;
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    worst = std::max(worst, std::abs(a(i) - b(i)) / std::max(1.0, std::abs(b(i))));
  }
  return worst;
}

}  // namespace testsupport
