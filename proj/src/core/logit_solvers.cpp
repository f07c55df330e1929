#include "core/logit_solvers.hpp"

#include <cmath>
#include <set>

#include "core/error.hpp"

namespace lmdrop {

namespace {

// Solves (H + lambda*scale*I) d = g, escalating lambda while the system is singular.
Eigen::VectorXd damped_direction(const NewtonEval& e, const NewtonOptions& opts, bool& ridge_used) {
  const Eigen::Index d = e.gradient.size();
  const double scale = 1.0 + (d > 0 ? e.neg_hessian.diagonal().cwiseAbs().maxCoeff() : 0.0);
  double lambda = 0.0;
  while (true) {
    Eigen::MatrixXd H = e.neg_hessian;
    if (lambda > 0.0) H.diagonal().array() += lambda * scale;
    Eigen::LLT<Eigen::MatrixXd> llt(H);
    if (llt.info() == Eigen::Success && llt.rcond() > 1e-13) {
      if (lambda > 0.0) ridge_used = true;
      return llt.solve(e.gradient);
    }
    lambda = lambda == 0.0 ? opts.ridge_start : 2.0 * lambda;
    if (lambda > opts.ridge_max * (1.0 + 1e-12)) {
      fail(ErrorCode::Numerical, "singular Hessian in inner Newton solve despite ridge damping");
    }
  }
}

}  // namespace

NewtonResult newton_maximize(const std::function<NewtonEval(const Eigen::VectorXd&, bool)>& eval,
                             Eigen::VectorXd start, const NewtonOptions& opts,
                             const std::function<bool(const Eigen::VectorXd&)>& stop) {
  NewtonResult r;
  r.x = std::move(start);
  NewtonEval cur = eval(r.x, true);
  r.value = cur.value;
  r.score_norm = cur.gradient.norm();
  if (r.x.size() == 0) {
    r.converged = true;
    return r;
  }
  for (r.iterations = 0; r.iterations < opts.max_iter; ++r.iterations) {
    if (r.score_norm <= opts.score_tol) {
      r.converged = true;
      break;
    }
    if (stop && stop(r.x)) break;
    const Eigen::VectorXd dir = damped_direction(cur, opts, r.ridge_used);
    // Predicted ascent below the rounding level of the objective: the value can no
    // longer rank steps, so take the full step if it shrinks the score instead.
    const double predicted = cur.gradient.dot(dir);
    const double noise = 1e-14 * (1.0 + std::abs(cur.value));
    const bool at_noise_floor = predicted <= noise;
    if (at_noise_floor) {
      const Eigen::VectorXd trial = r.x + dir;
      NewtonEval probe = eval(trial, true);
      const double norm = probe.gradient.norm();
      if (!std::isfinite(probe.value) || probe.value < cur.value - 100.0 * noise || !(norm < r.score_norm)) {
        r.converged = true;
        break;
      }
      r.x = trial;
      cur = std::move(probe);
      r.value = cur.value;
      r.score_norm = norm;
      continue;
    }
    double step = 1.0;
    bool accepted = false;
    for (int halving = 0; halving < 40; ++halving, step *= 0.5) {
      const Eigen::VectorXd trial = r.x + step * dir;
      const NewtonEval probe = eval(trial, false);
      if (std::isfinite(probe.value) && probe.value >= cur.value) {
        r.x = trial;
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      // No ascent possible at working precision.
      r.converged = r.score_norm <= std::sqrt(opts.score_tol);
      break;
    }
    cur = eval(r.x, true);
    r.value = cur.value;
    r.score_norm = cur.gradient.norm();
  }
  if (!r.converged && r.score_norm <= opts.score_tol) r.converged = true;
  return r;
}

double multinomial_objective(const std::vector<int>& strata, const Eigen::MatrixXd& weights,
                             const Eigen::MatrixXd& coef) {
  double q = 0.0;
  for (std::size_t r = 0; r < strata.size(); ++r) {
    const auto row = static_cast<Eigen::Index>(r);
    if (weights.row(row).sum() <= 0.0) continue;
    const Eigen::VectorXd eta = coef.col(0) + coef.col(1) * static_cast<double>(strata[r]);
    const Eigen::VectorXd lp = log_softmax_with_reference(eta);
    for (Eigen::Index j = 0; j < weights.cols(); ++j) {
      if (weights(row, j) > 0.0) q += weights(row, j) * lp(j);
    }
  }
  return q;
}

MultinomialFit fit_multinomial_logit(const std::vector<int>& strata, const Eigen::MatrixXd& weights,
                                     const Eigen::MatrixXd& start, const NewtonOptions& opts) {
  const Eigen::Index J = weights.cols();
  if (static_cast<Eigen::Index>(strata.size()) != weights.rows() || start.rows() != J - 1 ||
      start.cols() != 2) {
    fail(ErrorCode::InvalidArgument, "multinomial logit: inconsistent shapes");
  }
  MultinomialFit out;
  out.coef = start;
  if (J == 1) {
    out.converged = true;
    return out;
  }
  std::set<int> support;
  for (std::size_t r = 0; r < strata.size(); ++r) {
    if (weights.row(static_cast<Eigen::Index>(r)).sum() > 0.0) support.insert(strata[r]);
  }
  if (support.empty()) {
    out.converged = true;
    return out;
  }
  out.slope_unidentified = support.size() < 2;
  const bool with_slope = !out.slope_unidentified;
  const Eigen::Index per_cat = with_slope ? 2 : 1;
  const Eigen::Index dim = (J - 1) * per_cat;

  auto to_coef = [&](const Eigen::VectorXd& x) {
    Eigen::MatrixXd c = start;
    for (Eigen::Index j = 0; j + 1 < J; ++j) {
      c(j, 0) = x(j * per_cat);
      if (with_slope) c(j, 1) = x(j * per_cat + 1);
    }
    return c;
  };

  auto eval = [&](const Eigen::VectorXd& x, bool derivs) {
    const Eigen::MatrixXd c = to_coef(x);
    NewtonEval e;
    e.value = 0.0;
    if (derivs) {
      e.gradient = Eigen::VectorXd::Zero(dim);
      e.neg_hessian = Eigen::MatrixXd::Zero(dim, dim);
    }
    for (std::size_t r = 0; r < strata.size(); ++r) {
      const auto row = static_cast<Eigen::Index>(r);
      const double n = weights.row(row).sum();
      if (n <= 0.0) continue;
      const double s = strata[r];
      const Eigen::VectorXd lp = log_softmax_with_reference(c.col(0) + c.col(1) * s);
      for (Eigen::Index j = 0; j < J; ++j) {
        if (weights(row, j) > 0.0) e.value += weights(row, j) * lp(j);
      }
      if (!derivs) continue;
      const Eigen::VectorXd p = lp.array().exp();
      Eigen::VectorXd z(per_cat);
      z(0) = 1.0;
      if (with_slope) z(1) = s;
      const Eigen::MatrixXd zz = z * z.transpose();
      for (Eigen::Index j = 0; j + 1 < J; ++j) {
        e.gradient.segment(j * per_cat, per_cat) += (weights(row, j) - n * p(j)) * z;
        for (Eigen::Index l = 0; l + 1 < J; ++l) {
          const double h = n * ((j == l ? p(j) : 0.0) - p(j) * p(l));
          e.neg_hessian.block(j * per_cat, l * per_cat, per_cat, per_cat) += h * zz;
        }
      }
    }
    return e;
  };

  Eigen::VectorXd x0(dim);
  for (Eigen::Index j = 0; j + 1 < J; ++j) {
    x0(j * per_cat) = start(j, 0);
    if (with_slope) x0(j * per_cat + 1) = start(j, 1);
  }
  const auto nr = newton_maximize(eval, x0, opts);
  out.coef = to_coef(nr.x);
  out.value = nr.value;
  out.score_norm = nr.score_norm;
  out.iterations = nr.iterations;
  out.converged = nr.converged;
  return out;
}

namespace {

struct EmissionLayout {
  Eigen::Index p1, p2, J;
  Eigen::Index dim() const { return p1 + J * p2; }

  EmissionParams unflatten(const Eigen::VectorXd& x) const {
    EmissionParams em;
    em.beta = x.head(p1);
    em.u.resize(J, p2);
    for (Eigen::Index j = 0; j < J; ++j) em.u.row(j) = x.segment(p1 + j * p2, p2).transpose();
    return em;
  }
  Eigen::VectorXd flatten(const EmissionParams& em) const {
    Eigen::VectorXd x(dim());
    x.head(p1) = em.beta;
    for (Eigen::Index j = 0; j < J; ++j) x.segment(p1 + j * p2, p2) = em.u.row(j).transpose();
    return x;
  }
};

double log_emission(int y, double eta) {
  // log sigmoid(+-eta), stable for large |eta|
  const double a = y == 1 ? eta : -eta;
  return a >= 0 ? -std::log1p(std::exp(-a)) : a - std::log1p(std::exp(a));
}

}  // namespace

double emission_objective(const Dataset& data, const Posteriors& posteriors, const EmissionParams& em) {
  double q = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto& panel = data.panels[i];
    const auto& xi = posteriors.subjects[i].xi;
    const Eigen::VectorXd fixed = panel.x1 * em.beta;
    const Eigen::MatrixXd state = panel.x2 * em.u.transpose();
    for (int t = 0; t < panel.dropout_time(); ++t) {
      const int y = panel.responses[static_cast<std::size_t>(t)];
      for (Eigen::Index j = 0; j < em.u.rows(); ++j) {
        if (xi(t, j) > 0.0) q += xi(t, j) * log_emission(y, fixed(t) + state(t, j));
      }
    }
  }
  return q;
}

EmissionFit fit_emission(const Dataset& data, const Posteriors& posteriors, const EmissionParams& start,
                         const NewtonOptions& opts) {
  const EmissionLayout L{start.beta.size(), start.u.cols(), start.u.rows()};
  const Eigen::Index d = L.dim();
  double max_abs_residual = 0.0;

  auto eval = [&](const Eigen::VectorXd& x, bool derivs) {
    const EmissionParams em = L.unflatten(x);
    NewtonEval e;
    if (!derivs) {
      e.value = emission_objective(data, posteriors, em);
      return e;
    }
    e.gradient = Eigen::VectorXd::Zero(d);
    e.neg_hessian = Eigen::MatrixXd::Zero(d, d);
    max_abs_residual = 0.0;
    for (std::size_t i = 0; i < data.size(); ++i) {
      const auto& panel = data.panels[i];
      const auto& xi = posteriors.subjects[i].xi;
      const Eigen::VectorXd fixed = panel.x1 * em.beta;
      const Eigen::MatrixXd state = panel.x2 * em.u.transpose();
      for (int t = 0; t < panel.dropout_time(); ++t) {
        const int y = panel.responses[static_cast<std::size_t>(t)];
        const auto x1 = panel.x1.row(t).transpose();
        const auto x2 = panel.x2.row(t).transpose();
        for (Eigen::Index j = 0; j < L.J; ++j) {
          const double w = xi(t, j);
          if (w <= 0.0) continue;
          const double eta = fixed(t) + state(t, j);
          e.value += w * log_emission(y, eta);
          const double p = inverse_logit(eta);
          const double r = w * (y - p);
          const double h = w * p * (1.0 - p);
          if (w > 1e-8) max_abs_residual = std::max(max_abs_residual, std::abs(y - p));
          const Eigen::Index uo = L.p1 + j * L.p2;
          e.gradient.head(L.p1) += r * x1;
          e.gradient.segment(uo, L.p2) += r * x2;
          e.neg_hessian.topLeftCorner(L.p1, L.p1).noalias() += h * x1 * x1.transpose();
          e.neg_hessian.block(0, uo, L.p1, L.p2).noalias() += h * x1 * x2.transpose();
          e.neg_hessian.block(uo, uo, L.p2, L.p2).noalias() += h * x2 * x2.transpose();
        }
      }
    }
    for (Eigen::Index j = 0; j < L.J; ++j) {
      const Eigen::Index uo = L.p1 + j * L.p2;
      e.neg_hessian.block(uo, 0, L.p2, L.p1) = e.neg_hessian.block(0, uo, L.p1, L.p2).transpose();
    }
    return e;
  };

  bool diverged = false;
  auto stop = [&](const Eigen::VectorXd& x) {
    if (x.norm() > kSeparationNorm) diverged = true;
    return diverged;
  };
  const auto nr = newton_maximize(eval, L.flatten(start), opts, stop);
  if (nr.x.norm() > kSeparationNorm) diverged = true;

  EmissionFit out;
  out.params = L.unflatten(nr.x);
  out.value = nr.value;
  out.score_norm = nr.score_norm;
  out.iterations = nr.iterations;
  out.converged = nr.converged;
  // Divergent coefficients or a numerically perfect fit both indicate separation.
  out.separation = diverged || max_abs_residual < 1e-8;
  return out;
}

EmissionFit fit_pooled_logistic(const Dataset& data, const NewtonOptions& opts) {
  Posteriors ones;
  ones.subjects.reserve(data.size());
  for (const auto& p : data.panels) {
    ones.subjects.push_back({Eigen::MatrixXd::Ones(p.dropout_time(), 1), {}});
  }
  EmissionParams start{Eigen::VectorXd::Zero(data.p1), Eigen::MatrixXd::Zero(1, data.p2)};
  return fit_emission(data, ones, start, opts);
}

}  // namespace lmdrop
