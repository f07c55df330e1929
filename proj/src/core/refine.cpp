#include "core/refine.hpp"

#include <cmath>
#include <limits>

#include "core/error.hpp"
#include "core/likelihood.hpp"

namespace lmdrop {

namespace {

struct Point {
  Eigen::VectorXd x;
  double f = -std::numeric_limits<double>::infinity();
  Eigen::VectorXd g;
};

bool evaluate(const Dataset& data, ParameterSet& work, Point& p) {
  unpack(work, p.x);
  try {
    const auto e = e_step(data, work);
    p.f = e.loglik.total;
    p.g = score_from_posteriors(data, work, e.posteriors);
  } catch (const Error& err) {
    if (err.code() != ErrorCode::DegenerateLikelihood) throw;
    p.f = -std::numeric_limits<double>::infinity();
    return false;
  }
  return std::isfinite(p.f) && p.g.allFinite();
}

}  // namespace

RefineResult refine_newton(const Dataset& data, const ParameterSet& theta_em, const RefineOptions& opts) {
  if (theta_em.is_saturated()) {
    fail(ErrorCode::InvalidArgument, "Newton refinement requires the parametric chain variant");
  }
  RefineResult out;
  out.theta = theta_em;
  ParameterSet work = theta_em;

  Point cur;
  cur.x = pack(theta_em);
  if (!evaluate(data, work, cur)) fail(ErrorCode::DegenerateLikelihood, "refinement start has zero likelihood");
  out.start_loglik = cur.f;
  out.loglik = cur.f;
  out.grad_norm = cur.g.norm();

  const Eigen::Index d = cur.x.size();
  Eigen::MatrixXd h_inv = Eigen::MatrixXd::Identity(d, d) / std::max(1.0, cur.g.norm());
  bool fresh_metric = true;
  int stalled = 0;

  for (out.iterations = 0; out.iterations < opts.max_iter; ++out.iterations) {
    if (cur.g.norm() <= opts.grad_tol) {
      out.converged = true;
      break;
    }
    Eigen::VectorXd dir = h_inv * cur.g;
    double slope = cur.g.dot(dir);
    if (!(slope > 0.0)) {
      h_inv = Eigen::MatrixXd::Identity(d, d) / std::max(1.0, cur.g.norm());
      fresh_metric = true;
      dir = h_inv * cur.g;
      slope = cur.g.dot(dir);
    }
    // Cap the trial step so a poor metric cannot jump into underflow territory.
    const double max_step = 5.0;
    if (dir.norm() > max_step) {
      dir *= max_step / dir.norm();
      slope = cur.g.dot(dir);
    }

    Point next;
    bool accepted = false;
    for (double a = 1.0; a > 1e-12; a *= 0.5) {
      next.x = cur.x + a * dir;
      if (!evaluate(data, work, next)) continue;
      if (next.f >= cur.f + 1e-4 * a * slope) {
        accepted = true;
        break;
      }
      // Close to the optimum the predicted gain drops below the rounding level of the
      // log-likelihood; fall back to requiring a smaller gradient there.
      const double noise = 1e-12 * (1.0 + std::abs(cur.f));
      if (a * slope <= noise && next.f >= cur.f - noise && next.g.norm() < cur.g.norm()) {
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      if (!fresh_metric) {
        h_inv = Eigen::MatrixXd::Identity(d, d) / std::max(1.0, cur.g.norm());
        fresh_metric = true;
        continue;
      }
      break;
    }

    const Eigen::VectorXd s = next.x - cur.x;
    const Eigen::VectorXd y = cur.g - next.g;  // gradient change of the minimised -loglik
    const double sy = s.dot(y);
    if (sy > 1e-12 * s.norm() * y.norm()) {
      if (fresh_metric) h_inv = Eigen::MatrixXd::Identity(d, d) * (sy / y.squaredNorm());
      const double rho = 1.0 / sy;
      const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(d, d);
      h_inv = (I - rho * s * y.transpose()) * h_inv * (I - rho * y * s.transpose()) +
              rho * s * s.transpose();
      fresh_metric = false;
    }
    const double gain = next.f - cur.f;
    const bool flat = gain <= 1e-14 * std::abs(cur.f) && next.g.norm() >= 0.9 * cur.g.norm();
    stalled = flat ? stalled + 1 : 0;
    cur = std::move(next);
    if (stalled >= 5) break;
  }

  out.grad_norm = cur.g.norm();
  if (cur.g.norm() <= opts.grad_tol) out.converged = true;
  const double noise = 1e-12 * (1.0 + std::abs(out.start_loglik));
  if (cur.f > out.start_loglik || (out.converged && cur.f >= out.start_loglik - noise)) {
    unpack(work, cur.x);
    out.theta = work;
    out.loglik = cur.f;
  }
  if (!out.converged) {
    out.warning = cur.f > out.start_loglik
                      ? "quasi-Newton refinement stopped before reaching the gradient tolerance"
                      : "quasi-Newton line search failed; keeping the EM estimate";
  }
  return out;
}

}  // namespace lmdrop
