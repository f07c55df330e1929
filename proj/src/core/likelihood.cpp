#include "core/likelihood.hpp"

#include <cmath>
#include <string>

#include "core/error.hpp"

namespace lmdrop {

double inverse_logit(double eta) {
  if (eta >= 0) return 1.0 / (1.0 + std::exp(-eta));
  const double e = std::exp(eta);
  return e / (1.0 + e);
}

double emission_prob(int y, double eta) {
  return y == 1 ? inverse_logit(eta) : inverse_logit(-eta);
}

double emission_prob(int y, const Eigen::Ref<const Eigen::RowVectorXd>& x1,
                     const Eigen::Ref<const Eigen::RowVectorXd>& x2, const EmissionParams& em,
                     int state) {
  const double eta = x1.dot(em.beta.transpose()) + x2.dot(em.u.row(state));
  return emission_prob(y, eta);
}

Eigen::MatrixXd emission_matrix(const SubjectPanel& panel, const EmissionParams& em) {
  const Eigen::Index S = panel.dropout_time();
  const Eigen::Index J = em.u.rows();
  const Eigen::VectorXd fixed = panel.x1 * em.beta;
  const Eigen::MatrixXd state = panel.x2 * em.u.transpose();  // S x J
  Eigen::MatrixXd f(S, J);
  for (Eigen::Index t = 0; t < S; ++t) {
    const int y = panel.responses[static_cast<std::size_t>(t)];
    for (Eigen::Index j = 0; j < J; ++j) f(t, j) = emission_prob(y, fixed(t) + state(t, j));
  }
  return f;
}

namespace {

[[noreturn]] void degenerate(Eigen::Index t) {
  fail(ErrorCode::DegenerateLikelihood,
       "likelihood underflow: all states have zero probability at time " + std::to_string(t + 1));
}

}  // namespace

ScaledForward scaled_forward(const Eigen::MatrixXd& f, const ChainLaws& laws) {
  const Eigen::Index S = f.rows();
  const Eigen::Index J = f.cols();
  if (S < 1) fail(ErrorCode::InvalidArgument, "panel must have at least one observation");
  ScaledForward fw{Eigen::MatrixXd(S, J), Eigen::VectorXd(S)};
  Eigen::RowVectorXd a = laws.initial.transpose().cwiseProduct(f.row(0));
  for (Eigen::Index t = 0;; ++t) {
    const double c = a.sum();
    if (!(c > 0.0) || !std::isfinite(c)) degenerate(t);
    fw.scale(t) = c;
    fw.alpha.row(t) = a / c;
    if (t + 1 == S) break;
    a = (fw.alpha.row(t) * laws.transition).cwiseProduct(f.row(t + 1));
  }
  return fw;
}

double forward_loglik(const SubjectPanel& panel, const ChainLaws& laws, const EmissionParams& em) {
  const auto fw = scaled_forward(emission_matrix(panel, em), laws);
  return fw.scale.array().log().sum();
}

SubjectFit forward_backward(const SubjectPanel& panel, const ChainLaws& laws, const EmissionParams& em) {
  const Eigen::MatrixXd f = emission_matrix(panel, em);
  const auto fw = scaled_forward(f, laws);
  const Eigen::Index S = f.rows();
  const Eigen::Index J = f.cols();

  SubjectFit out;
  out.loglik = fw.scale.array().log().sum();
  Eigen::MatrixXd b(S, J);
  b.row(S - 1).setOnes();
  for (Eigen::Index t = S - 2; t >= 0; --t) {
    const Eigen::VectorXd w = f.row(t + 1).cwiseProduct(b.row(t + 1)).transpose();
    b.row(t) = (laws.transition * w).transpose() / fw.scale(t + 1);
  }
  auto& post = out.posterior;
  post.xi = fw.alpha.cwiseProduct(b);
  for (Eigen::Index t = 0; t < S; ++t) post.xi.row(t) /= post.xi.row(t).sum();
  post.zeta.reserve(static_cast<std::size_t>(S - 1));
  for (Eigen::Index t = 0; t + 1 < S; ++t) {
    Eigen::MatrixXd z = fw.alpha.row(t).transpose().asDiagonal() * laws.transition;
    z = z * f.row(t + 1).cwiseProduct(b.row(t + 1)).asDiagonal();
    z /= z.sum();
    post.zeta.push_back(std::move(z));
  }
  return out;
}

double brute_force_loglik(const SubjectPanel& panel, const ChainLaws& laws, const EmissionParams& em) {
  const Eigen::MatrixXd f = emission_matrix(panel, em);
  const auto S = static_cast<int>(f.rows());
  const auto J = static_cast<int>(f.cols());
  double count = 1.0;
  for (int t = 0; t < S; ++t) {
    count *= J;
    if (count > 1e6) fail(ErrorCode::InvalidArgument, "brute-force enumeration exceeds 10^6 paths");
  }
  std::vector<int> path(static_cast<std::size_t>(S), 0);
  double total = 0.0;
  while (true) {
    double p = laws.initial(path[0]) * f(0, path[0]);
    for (int t = 1; t < S; ++t) {
      const auto prev = path[static_cast<std::size_t>(t - 1)];
      const auto cur = path[static_cast<std::size_t>(t)];
      p *= laws.transition(prev, cur) * f(t, cur);
    }
    total += p;
    int pos = S - 1;
    while (pos >= 0 && ++path[static_cast<std::size_t>(pos)] == J) path[static_cast<std::size_t>(pos--)] = 0;
    if (pos < 0) break;
  }
  if (!(total > 0.0)) fail(ErrorCode::DegenerateLikelihood, "brute-force likelihood is zero");
  return std::log(total);
}

LogLikelihood conditional_loglik(const Dataset& data, const ParameterSet& theta) {
  LogLikelihood ll;
  ll.per_subject.reserve(data.size());
  for (const auto& panel : data.panels) {
    const double v = forward_loglik(panel, laws_for(theta, panel.dropout_time()), theta.emission);
    ll.per_subject.push_back(v);
    ll.total += v;
  }
  return ll;
}

EStepResult e_step(const Dataset& data, const ParameterSet& theta) {
  EStepResult r;
  r.posteriors.subjects.reserve(data.size());
  r.loglik.per_subject.reserve(data.size());
  for (const auto& panel : data.panels) {
    auto fit = forward_backward(panel, laws_for(theta, panel.dropout_time()), theta.emission);
    r.loglik.per_subject.push_back(fit.loglik);
    r.loglik.total += fit.loglik;
    r.posteriors.subjects.push_back(std::move(fit.posterior));
  }
  return r;
}

Eigen::VectorXd score_from_posteriors(const Dataset& data, const ParameterSet& theta,
                                      const Posteriors& posteriors) {
  if (theta.is_saturated()) {
    fail(ErrorCode::InvalidArgument, "score is only defined for the parametric chain variant");
  }
  const int J = theta.n_states();
  const int p1 = theta.p1();
  const int p2 = theta.p2();
  Eigen::VectorXd g_beta = Eigen::VectorXd::Zero(p1);
  Eigen::MatrixXd g_u = Eigen::MatrixXd::Zero(J, p2);
  Eigen::MatrixXd g_gamma = Eigen::MatrixXd::Zero(J - 1, 2);
  std::vector<Eigen::MatrixXd> g_phi(static_cast<std::size_t>(J), Eigen::MatrixXd::Zero(J - 1, 2));
  const bool markov = theta.model == ModelKind::LatentMarkov;

  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto& panel = data.panels[i];
    const auto& post = posteriors.subjects[i];
    const int s = panel.dropout_time();
    const Eigen::Vector2d z(1.0, static_cast<double>(s));

    const Eigen::VectorXd fixed = panel.x1 * theta.emission.beta;
    const Eigen::MatrixXd state = panel.x2 * theta.emission.u.transpose();
    for (int t = 0; t < s; ++t) {
      const double y = panel.responses[static_cast<std::size_t>(t)];
      for (int j = 0; j < J; ++j) {
        const double r = post.xi(t, j) * (y - inverse_logit(fixed(t) + state(t, j)));
        g_beta += r * panel.x1.row(t).transpose();
        g_u.row(j) += r * panel.x2.row(t);
      }
    }

    const Eigen::VectorXd pi = initial_probs(theta.parametric, s);
    for (int j = 0; j + 1 < J; ++j) g_gamma.row(j) += (post.xi(0, j) - pi(j)) * z.transpose();

    if (markov && s > 1) {
      const Eigen::MatrixXd A = transition_matrix(theta.parametric, s);
      Eigen::MatrixXd counts = Eigen::MatrixXd::Zero(J, J);
      for (const auto& zt : post.zeta) counts += zt;
      for (int k = 0; k < J; ++k) {
        const double mass = counts.row(k).sum();
        for (int j = 0; j + 1 < J; ++j) {
          g_phi[static_cast<std::size_t>(k)].row(j) += (counts(k, j) - mass * A(k, j)) * z.transpose();
        }
      }
    }
  }

  ParameterSet grad = theta;
  grad.emission.beta = g_beta;
  grad.emission.u = g_u;
  grad.parametric.gamma = g_gamma;
  if (markov) grad.parametric.phi = g_phi;
  return pack(grad);
}

Eigen::VectorXd score(const Dataset& data, const ParameterSet& theta) {
  return score_from_posteriors(data, theta, e_step(data, theta).posteriors);
}

}  // namespace lmdrop
