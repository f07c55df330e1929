#include "core/inference.hpp"

#include <cmath>
#include <fstream>
#include <limits>

#include "core/error.hpp"
#include "core/kv_io.hpp"
#include "core/parallel.hpp"
#include "core/rng.hpp"
#include "core/sim_harness.hpp"

namespace lmdrop {

CriteriaRow criteria_row(double loglik, int k, int n) {
  CriteriaRow r;
  r.loglik = loglik;
  r.k = k;
  r.n = n;
  const double dev = -2.0 * loglik;
  r.aic = dev + 2.0 * k;
  r.aic3 = dev + 3.0 * k;
  r.bic = dev + k * std::log(static_cast<double>(n));
  if (n > k + 1) {
    const double denom = static_cast<double>(n - k - 1);
    r.aicc = r.aic + 2.0 * k * (k + 1) / denom;
    r.aicu = *r.aicc + n * std::log(static_cast<double>(n) / denom);
  }
  return r;
}

CriteriaRow information_criteria(double loglik, int k, int n) {
  if (n <= k + 1) {
    fail(ErrorCode::InvalidArgument, "AICc/AICu undefined: n = " + std::to_string(n) +
                                         " must exceed k + 1 = " + std::to_string(k + 1));
  }
  return criteria_row(loglik, k, n);
}

void write_criteria_table(const std::vector<CriteriaTableRow>& rows, std::ostream& out) {
  const char* names[] = {"AIC", "AIC3", "AICc", "AICu", "BIC"};
  auto value = [](const CriteriaRow& r, int c) -> std::optional<double> {
    switch (c) {
      case 0: return r.aic;
      case 1: return r.aic3;
      case 2: return r.aicc;
      case 3: return r.aicu;
      default: return r.bic;
    }
  };
  std::vector<std::string> best(rows.size());
  for (int c = 0; c < 5; ++c) {
    std::optional<std::size_t> arg;
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const auto v = value(rows[i].row, c);
      if (v && (!arg || *v < *value(rows[*arg].row, c))) arg = i;
    }
    if (arg) best[*arg] += (best[*arg].empty() ? "" : ";") + std::string(names[c]);
  }
  out << "model,J,k,loglik,AIC,AIC3,AICc,AICu,BIC,best_by\n";
  char buf[64];
  auto fmt = [&](std::optional<double> v) -> std::string {
    if (!v) return "NA";
    std::snprintf(buf, sizeof buf, "%.3f", *v);
    return buf;
  };
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& r = rows[i].row;
    out << (rows[i].model == ModelKind::LatentMarkov ? "M1" : "M2") << ',' << rows[i].n_states << ',' << r.k
        << ',' << fmt(r.loglik) << ',' << fmt(r.aic) << ',' << fmt(r.aic3) << ',' << fmt(r.aicc) << ','
        << fmt(r.aicu) << ',' << fmt(r.bic) << ',' << best[i] << '\n';
  }
}

void write_criteria_table(const std::vector<CriteriaTableRow>& rows, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) fail(ErrorCode::Io, "cannot write " + path.string());
  write_criteria_table(rows, out);
}

double classification_index(const Posteriors& posteriors, int n_states) {
  if (n_states < 2) fail(ErrorCode::InvalidArgument, "classification index H requires J >= 2");
  const double floor = 1.0 / n_states;
  double num = 0.0;
  double obs = 0.0;
  for (const auto& s : posteriors.subjects) {
    for (Eigen::Index t = 0; t < s.xi.rows(); ++t) num += s.xi.row(t).maxCoeff() - floor;
    obs += static_cast<double>(s.xi.rows());
  }
  if (obs == 0.0) fail(ErrorCode::InvalidArgument, "classification index needs observations");
  return num / ((1.0 - floor) * obs);
}

Decoding local_decode(const Posteriors& posteriors) {
  Decoding d;
  for (const auto& s : posteriors.subjects) {
    std::vector<int> states;
    std::vector<bool> ties;
    for (Eigen::Index t = 0; t < s.xi.rows(); ++t) {
      Eigen::Index best = 0;
      bool tie = false;
      for (Eigen::Index j = 1; j < s.xi.cols(); ++j) {
        if (s.xi(t, j) > s.xi(t, best)) {
          best = j;
          tie = false;
        } else if (s.xi(t, j) == s.xi(t, best)) {
          tie = true;
        }
      }
      states.push_back(static_cast<int>(best));
      ties.push_back(tie);
      d.n_ties += tie ? 1 : 0;
    }
    d.states.push_back(std::move(states));
    d.ties.push_back(std::move(ties));
  }
  return d;
}

Eigen::MatrixXi attrition_table(const Dataset& data, const Decoding& decoding, int n_states) {
  Eigen::MatrixXi table = Eigen::MatrixXi::Zero(n_states, data.horizon);
  for (std::size_t i = 0; i < data.size(); ++i) {
    const int s = data.panels[i].dropout_time();
    ++table(decoding.states[i][static_cast<std::size_t>(s - 1)], s - 1);
  }
  return table;
}

Eigen::MatrixXd average_state_probs(const Posteriors& posteriors, int horizon) {
  const int J = posteriors.n_states();
  Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(horizon, J);
  Eigen::VectorXd count = Eigen::VectorXd::Zero(horizon);
  for (const auto& s : posteriors.subjects) {
    for (Eigen::Index t = 0; t < s.xi.rows() && t < horizon; ++t) {
      sum.row(t) += s.xi.row(t);
      count(t) += 1.0;
    }
  }
  for (int t = 0; t < horizon; ++t) {
    if (count(t) > 0) {
      sum.row(t) /= count(t);
    } else {
      sum.row(t).setConstant(std::numeric_limits<double>::quiet_NaN());
    }
  }
  return sum;
}

namespace {

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) fail(ErrorCode::Io, "cannot write " + path.string());
  return out;
}

}  // namespace

void write_decoded_states(const Dataset& data, const Decoding& decoding, const std::filesystem::path& path) {
  auto out = open_out(path);
  out << "subject,time,state,tie\n";
  for (std::size_t i = 0; i < data.size(); ++i) {
    for (std::size_t t = 0; t < decoding.states[i].size(); ++t) {
      out << data.panels[i].subject_id << ',' << (t + 1) << ',' << (decoding.states[i][t] + 1) << ','
          << (decoding.ties[i][t] ? 1 : 0) << '\n';
    }
  }
}

void write_attrition_table(const Eigen::MatrixXi& table, const std::filesystem::path& path) {
  auto out = open_out(path);
  out << "state";
  for (Eigen::Index t = 0; t < table.cols(); ++t) out << ",S=" << (t + 1);
  out << '\n';
  for (Eigen::Index j = 0; j < table.rows(); ++j) {
    out << (j + 1);
    for (Eigen::Index t = 0; t < table.cols(); ++t) out << ',' << table(j, t);
    out << '\n';
  }
}

void write_average_state_probs(const Eigen::MatrixXd& probs, const std::filesystem::path& path) {
  auto out = open_out(path);
  out << "time";
  for (Eigen::Index j = 0; j < probs.cols(); ++j) out << ",state" << (j + 1);
  out << '\n';
  for (Eigen::Index t = 0; t < probs.rows(); ++t) {
    out << (t + 1);
    for (Eigen::Index j = 0; j < probs.cols(); ++j) {
      out << ',' << (std::isnan(probs(t, j)) ? std::string("NA") : format_double(probs(t, j)));
    }
    out << '\n';
  }
}

void write_posteriors(const Dataset& data, const Posteriors& posteriors, const std::filesystem::path& path) {
  auto out = open_out(path);
  out << "subject,time";
  for (int j = 0; j < posteriors.n_states(); ++j) out << ",xi" << (j + 1);
  out << '\n';
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto& xi = posteriors.subjects[i].xi;
    for (Eigen::Index t = 0; t < xi.rows(); ++t) {
      out << data.panels[i].subject_id << ',' << (t + 1);
      for (Eigen::Index j = 0; j < xi.cols(); ++j) out << ',' << format_double(xi(t, j));
      out << '\n';
    }
  }
}

BootstrapResult parametric_bootstrap(const Dataset& data, const ParameterSet& theta_hat,
                                     const BootstrapOptions& opts) {
  if (opts.B < 1) fail(ErrorCode::InvalidArgument, "bootstrap needs B >= 1; standard errors undefined for B = 0");
  BootstrapResult res;
  res.B = opts.B;
  res.names = parameter_names(theta_hat);
  res.estimate = pack(theta_hat);
  const auto dim = res.estimate.size();
  res.replicate_estimates = Eigen::MatrixXd::Constant(opts.B, dim, std::numeric_limits<double>::quiet_NaN());

  std::vector<char> ok(static_cast<std::size_t>(opts.B), 0);
  parallel_for(static_cast<std::size_t>(opts.B), opts.threads, [&](std::size_t b) {
    Rng rng = derive_rng(opts.seed, b);
    Dataset design = data;
    if (opts.resample_dropout) {
      std::uniform_int_distribution<std::size_t> pick(0, data.size() - 1);
      for (std::size_t i = 0; i < data.size(); ++i) {
        design.panels[i] = data.panels[pick(rng)];
        design.panels[i].subject_id = std::to_string(i + 1);
      }
    }
    EMConfig cfg = opts.em;
    cfg.threads = 1;
    ParameterSet start = theta_hat;
    if (start.is_saturated()) {
      // Strata absent from the original fit cannot seed a replicate.
      for (int s : design.dropout_times()) {
        if (!start.saturated.observed[static_cast<std::size_t>(s - 1)]) return;
      }
    }
    try {
      const Dataset sample = simulate_from_model(design, theta_hat, rng);
      const FitResult fit = fit_from_start(sample, start, cfg);
      if (!fit.converged) return;
      res.replicate_estimates.row(static_cast<Eigen::Index>(b)) = pack(fit.theta).transpose();
      ok[b] = 1;
    } catch (const Error&) {
      // excluded and counted as failed
    }
  });

  std::vector<Eigen::Index> good;
  for (std::size_t b = 0; b < ok.size(); ++b) {
    if (ok[b]) good.push_back(static_cast<Eigen::Index>(b));
  }
  res.n_failed = opts.B - static_cast<int>(good.size());
  if (good.size() < 2) {
    fail(ErrorCode::NotConverged, "bootstrap standard errors undefined: fewer than two successful replicates");
  }
  Eigen::MatrixXd kept(static_cast<Eigen::Index>(good.size()), dim);
  for (std::size_t r = 0; r < good.size(); ++r) kept.row(static_cast<Eigen::Index>(r)) = res.replicate_estimates.row(good[r]);
  const Eigen::RowVectorXd mean = kept.colwise().mean();
  res.se = ((kept.rowwise() - mean).array().square().colwise().sum() / static_cast<double>(kept.rows() - 1))
               .sqrt()
               .transpose();
  if (res.n_failed * 4 > opts.B) {
    res.warnings.push_back("more than a quarter of bootstrap replicates failed (" + std::to_string(res.n_failed) +
                           " of " + std::to_string(opts.B) + ")");
  }
  return res;
}

void write_bootstrap_table(const BootstrapResult& result, const std::filesystem::path& path) {
  auto out = open_out(path);
  out << "parameter,estimate,se\n";
  for (std::size_t p = 0; p < result.names.size(); ++p) {
    const auto i = static_cast<Eigen::Index>(p);
    out << result.names[p] << ',' << format_double(result.estimate(i)) << ',' << format_double(result.se(i)) << '\n';
  }
}

}  // namespace lmdrop
