// Reference implementations kept deliberately naive: plain IRLS for a weighted
// logistic regression and a direct-enumeration EM for a logistic mixture.
#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <vector>

namespace oracle {

// Weighted logistic regression by IRLS on an explicit design matrix.
inline Eigen::VectorXd irls(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const Eigen::VectorXd& w,
                            Eigen::VectorXd b, int iters = 100) {
  for (int it = 0; it < iters; ++it) {
    const Eigen::VectorXd p = (1.0 / (1.0 + (-(X * b)).array().exp())).matrix();
    const Eigen::VectorXd v = (w.array() * p.array() * (1.0 - p.array())).matrix();
    const Eigen::MatrixXd H = X.transpose() * v.asDiagonal() * X;
    const Eigen::VectorXd g = X.transpose() * (w.array() * (y - p).array()).matrix();
    const Eigen::VectorXd step = H.ldlt().solve(g);
    b += step;
    if (step.norm() < 1e-13) break;
  }
  return b;
}

struct MixtureFit {
  Eigen::VectorXd beta;
  Eigen::VectorXd intercepts;
  Eigen::VectorXd weights;
  double loglik = 0.0;
};

// Two-or-more component mixture of logistic regressions with a subject-level class,
// shared slopes and class-specific intercepts. rows: one vector of (y, x) per subject.
struct Obs {
  int y;
  Eigen::VectorXd x;
};

inline MixtureFit logistic_mixture(const std::vector<std::vector<Obs>>& subjects, MixtureFit start,
                                   int iters = 5000, double tol = 1e-12) {
  const int J = static_cast<int>(start.intercepts.size());
  const auto p1 = start.beta.size();
  MixtureFit cur = start;
  double prev = -INFINITY;
  for (int it = 0; it < iters; ++it) {
    // E-step: subject posteriors by direct products.
    std::vector<Eigen::VectorXd> post;
    double ll = 0.0;
    for (const auto& s : subjects) {
      Eigen::VectorXd lw(J);
      for (int j = 0; j < J; ++j) {
        double l = std::log(cur.weights(j));
        for (const auto& o : s) {
          const double eta = o.x.dot(cur.beta) + cur.intercepts(j);
          const double p = 1.0 / (1.0 + std::exp(-eta));
          l += std::log(o.y ? p : 1.0 - p);
        }
        lw(j) = l;
      }
      const double m = lw.maxCoeff();
      const double z = (lw.array() - m).exp().sum();
      ll += m + std::log(z);
      post.push_back(((lw.array() - m).exp() / z).matrix());
    }
    cur.loglik = ll;
    if (std::abs(ll - prev) < tol * std::abs(ll)) break;
    prev = ll;
    // M-step: class weights, then one stacked weighted logistic fit.
    cur.weights.setZero();
    for (const auto& p : post) cur.weights += p;
    cur.weights /= static_cast<double>(subjects.size());
    std::size_t rows = 0;
    for (const auto& s : subjects) rows += s.size() * static_cast<std::size_t>(J);
    Eigen::MatrixXd X = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(rows), p1 + J);
    Eigen::VectorXd y(static_cast<Eigen::Index>(rows)), w(static_cast<Eigen::Index>(rows));
    Eigen::Index r = 0;
    for (std::size_t i = 0; i < subjects.size(); ++i) {
      for (const auto& o : subjects[i]) {
        for (int j = 0; j < J; ++j, ++r) {
          X.row(r).head(p1) = o.x.transpose();
          X(r, p1 + j) = 1.0;
          y(r) = o.y;
          w(r) = post[i](j);
        }
      }
    }
    Eigen::VectorXd b(p1 + J);
    b << cur.beta, cur.intercepts;
    b = irls(X, y, w, b);
    cur.beta = b.head(p1);
    cur.intercepts = b.tail(J);
  }
  return cur;
}

}  // namespace oracle
