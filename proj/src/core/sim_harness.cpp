#include "core/sim_harness.hpp"

#include <cmath>
#include <fstream>
#include <optional>

#include "core/error.hpp"
#include "core/kv_io.hpp"
#include "core/likelihood.hpp"
#include "core/parallel.hpp"

namespace lmdrop {

const char* to_string(Scheme s) { return s == Scheme::Conditional ? "conditional" : "joint"; }

Scheme parse_scheme(const std::string& s) {
  const std::string t = trim(s);
  if (t == "conditional") return Scheme::Conditional;
  if (t == "joint") return Scheme::Joint;
  fail(ErrorCode::Parse, "unknown scheme '" + s + "' (expected conditional|joint)");
}

SchemeSpec SchemeSpec::conditional_defaults() {
  SchemeSpec s;
  s.scheme = Scheme::Conditional;
  s.chain = ChainParamsParametric::zeros(2);
  s.chain.gamma << 2.0, -0.5;
  s.chain.phi[0] << 5.0, -1.5;
  s.chain.phi[1] << 5.0, -0.75;
  s.intercepts = Eigen::Vector2d(1.0, -1.5);
  return s;
}

SchemeSpec SchemeSpec::joint_defaults() {
  SchemeSpec s;
  s.scheme = Scheme::Joint;
  s.horizon = 5;
  s.initial = Eigen::Vector2d(0.6, 0.4);
  s.transition.resize(2, 2);
  s.transition << 0.8, 0.2, 0.2, 0.8;
  s.dropout_logits = Eigen::Vector2d(-3.0, -1.5);
  s.intercepts = Eigen::Vector2d(1.0, -1.5);
  return s;
}

void SchemeSpec::validate() const {
  if (n < 1 || horizon < 1 || n_states < 1) fail(ErrorCode::InvalidArgument, "scheme needs n, T, J >= 1");
  if (intercepts.size() != n_states) fail(ErrorCode::InvalidArgument, "one intercept per state required");
  if (scheme == Scheme::Conditional) {
    if (chain.n_states() != n_states || static_cast<int>(chain.phi.size()) != n_states) {
      fail(ErrorCode::InvalidArgument, "conditional scheme chain parameters do not match J");
    }
  } else {
    if (initial.size() != n_states || transition.rows() != n_states || transition.cols() != n_states ||
        dropout_logits.size() != n_states) {
      fail(ErrorCode::InvalidArgument, "joint scheme parameters do not match J");
    }
    auto is_simplex = [](const Eigen::VectorXd& v) {
      return (v.array() >= 0.0).all() && std::abs(v.sum() - 1.0) < 1e-9;
    };
    if (!is_simplex(initial)) fail(ErrorCode::InvalidArgument, "initial vector must be a probability vector");
    for (int k = 0; k < n_states; ++k) {
      if (!is_simplex(transition.row(k).transpose())) {
        fail(ErrorCode::InvalidArgument, "transition rows must be probability vectors");
      }
    }
  }
}

std::vector<std::pair<std::string, std::string>> SchemeSpec::to_entries() const {
  std::vector<std::pair<std::string, std::string>> e{
      {"scheme", to_string(scheme)},     {"n", std::to_string(n)},
      {"T", std::to_string(horizon)},    {"J", std::to_string(n_states)},
      {"seed", std::to_string(seed)},    {"beta", format_double(beta)},
  };
  for (int j = 0; j < n_states; ++j) e.emplace_back("intercept." + std::to_string(j + 1), format_double(intercepts(j)));
  if (scheme == Scheme::Conditional) {
    for (int j = 0; j + 1 < n_states; ++j) {
      for (int c = 0; c < 2; ++c) {
        e.emplace_back("gamma." + std::to_string(j + 1) + "." + std::to_string(c), format_double(chain.gamma(j, c)));
      }
    }
    for (int k = 0; k < n_states; ++k) {
      for (int j = 0; j + 1 < n_states; ++j) {
        for (int c = 0; c < 2; ++c) {
          e.emplace_back("phi." + std::to_string(k + 1) + "." + std::to_string(j + 1) + "." + std::to_string(c),
                         format_double(chain.phi[static_cast<std::size_t>(k)](j, c)));
        }
      }
    }
  } else {
    for (int j = 0; j < n_states; ++j) e.emplace_back("pi." + std::to_string(j + 1), format_double(initial(j)));
    for (int k = 0; k < n_states; ++k) {
      for (int j = 0; j < n_states; ++j) {
        e.emplace_back("A." + std::to_string(k + 1) + "." + std::to_string(j + 1), format_double(transition(k, j)));
      }
    }
    for (int j = 0; j < n_states; ++j) {
      e.emplace_back("dropout_logit." + std::to_string(j + 1), format_double(dropout_logits(j)));
    }
  }
  return e;
}

ModelConfig simulation_model_config(int n_states) {
  ModelConfig c;
  c.n_states = n_states;
  c.fixed_columns = {"x"};
  c.random_intercept = true;
  return c;
}

namespace {

int draw_categorical(const Eigen::Ref<const Eigen::VectorXd>& p, Rng& rng) {
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const double u = unif(rng);
  double acc = 0.0;
  for (Eigen::Index j = 0; j + 1 < p.size(); ++j) {
    acc += p(j);
    if (u < acc) return static_cast<int>(j);
  }
  return static_cast<int>(p.size() - 1);
}

bool draw_bernoulli(double p, Rng& rng) {
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  return unif(rng) < p;
}

Dataset empty_sim_dataset(const SchemeSpec& spec) {
  Dataset d;
  d.horizon = spec.horizon;
  d.p1 = 1;
  d.p2 = 1;
  d.x1_names = {"x"};
  d.x2_names = {kInterceptName};
  d.panels.reserve(static_cast<std::size_t>(spec.n));
  return d;
}

SubjectPanel sim_panel(int id, const std::vector<int>& states, int s, const SchemeSpec& spec, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  SubjectPanel p;
  p.subject_id = std::to_string(id);
  p.x1.resize(s, 1);
  p.x2 = Eigen::MatrixXd::Ones(s, 1);
  for (int t = 0; t < s; ++t) {
    const double x = normal(rng);
    p.x1(t, 0) = x;
    const double eta = spec.beta * x + spec.intercepts(states[static_cast<std::size_t>(t)]);
    p.responses.push_back(draw_bernoulli(inverse_logit(eta), rng) ? 1 : 0);
  }
  return p;
}

}  // namespace

SimulatedData simulate_conditional(const SchemeSpec& spec) {
  if (spec.scheme != Scheme::Conditional) fail(ErrorCode::InvalidArgument, "expected conditional scheme");
  spec.validate();
  Rng rng(spec.seed);
  std::uniform_int_distribution<int> dropout(1, spec.horizon);
  SimulatedData out{empty_sim_dataset(spec), {}};
  for (int i = 0; i < spec.n; ++i) {
    const int s = dropout(rng);
    const ChainLaws laws = chain_laws(spec.chain, s);
    std::vector<int> path;
    path.push_back(draw_categorical(laws.initial, rng));
    for (int t = 1; t < s; ++t) path.push_back(draw_categorical(laws.transition.row(path.back()).transpose(), rng));
    out.data.panels.push_back(sim_panel(i + 1, path, s, spec, rng));
    out.truth.states.push_back(std::move(path));
    out.truth.dropout.push_back(s);
    out.truth.dropout_fired.push_back(s < spec.horizon);
  }
  return out;
}

SimulatedData simulate_joint(const SchemeSpec& spec) {
  if (spec.scheme != Scheme::Joint) fail(ErrorCode::InvalidArgument, "expected joint scheme");
  spec.validate();
  Rng rng(spec.seed);
  SimulatedData out{empty_sim_dataset(spec), {}};
  for (int i = 0; i < spec.n; ++i) {
    std::vector<int> path;
    path.push_back(draw_categorical(spec.initial, rng));
    for (int t = 1; t < spec.horizon; ++t) {
      path.push_back(draw_categorical(spec.transition.row(path.back()).transpose(), rng));
    }
    int s = spec.horizon;
    bool fired = false;
    for (int t = 0; t < spec.horizon; ++t) {
      const double hazard = inverse_logit(spec.dropout_logits(path[static_cast<std::size_t>(t)]));
      if (draw_bernoulli(hazard, rng)) {
        s = t + 1;
        fired = true;
        break;
      }
    }
    out.data.panels.push_back(sim_panel(i + 1, path, s, spec, rng));
    out.truth.states.push_back(std::move(path));
    out.truth.dropout.push_back(s);
    out.truth.dropout_fired.push_back(fired);
  }
  return out;
}

SimulatedData simulate(const SchemeSpec& spec) {
  return spec.scheme == Scheme::Conditional ? simulate_conditional(spec) : simulate_joint(spec);
}

void write_ground_truth(const GroundTruth& truth, const Dataset& data, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) fail(ErrorCode::Io, "cannot write " + path.string());
  out << "subject,time,state,observed,dropout_time,dropout_fired\n";
  for (std::size_t i = 0; i < truth.states.size(); ++i) {
    const int s = truth.dropout[i];
    for (std::size_t t = 0; t < truth.states[i].size(); ++t) {
      out << data.panels[i].subject_id << ',' << (t + 1) << ',' << (truth.states[i][t] + 1) << ','
          << (static_cast<int>(t) < s ? 1 : 0) << ',' << s << ',' << (truth.dropout_fired[i] ? 1 : 0) << '\n';
    }
  }
  if (!out) fail(ErrorCode::Io, "write failed for " + path.string());
}

Dataset simulate_from_model(const Dataset& design, const ParameterSet& theta, Rng& rng,
                            std::vector<std::vector<int>>* states) {
  Dataset out = design;
  if (states) states->clear();
  for (auto& panel : out.panels) {
    const int s = panel.dropout_time();
    const ChainLaws laws = laws_for(theta, s);
    std::vector<int> path;
    path.push_back(draw_categorical(laws.initial, rng));
    for (int t = 1; t < s; ++t) path.push_back(draw_categorical(laws.transition.row(path.back()).transpose(), rng));
    for (int t = 0; t < s; ++t) {
      const double eta = panel.x1.row(t).dot(theta.emission.beta) +
                         panel.x2.row(t).dot(theta.emission.u.row(path[static_cast<std::size_t>(t)]));
      panel.responses[static_cast<std::size_t>(t)] = draw_bernoulli(inverse_logit(eta), rng) ? 1 : 0;
    }
    if (states) states->push_back(std::move(path));
  }
  return out;
}

void summarize(ModelReplication& m, double truth, int reps) {
  const auto n = static_cast<double>(m.estimates.size());
  m.valid = m.failed * 5 <= reps && !m.estimates.empty();
  if (m.estimates.empty()) {
    m.bias = m.sd = m.mse = std::nan("");
    return;
  }
  double mean = 0.0;
  for (double b : m.estimates) mean += b;
  mean /= n;
  double var = 0.0, mse = 0.0;
  for (double b : m.estimates) {
    var += (b - mean) * (b - mean);
    mse += (b - truth) * (b - truth);
  }
  m.bias = mean - truth;
  m.sd = std::sqrt(var / n);
  m.mse = mse / n;
}

ReplicationReport run_replications(const SchemeSpec& spec, int reps, const std::vector<ModelKind>& models,
                                   const EMConfig& em, int threads) {
  if (reps < 2) fail(ErrorCode::InvalidArgument, "replications need reps >= 2");
  spec.validate();
  const auto R = static_cast<std::size_t>(reps);
  // estimates[m][r]; empty optional marks a failed fit
  std::vector<std::vector<std::optional<double>>> estimates(models.size(), std::vector<std::optional<double>>(R));
  parallel_for(R, threads, [&](std::size_t r) {
    SchemeSpec rep_spec = spec;
    rep_spec.seed = derive_rng(spec.seed, r)();
    const auto sim = simulate(rep_spec);
    EMConfig cfg = em;
    cfg.threads = 1;
    cfg.seed = derive_rng(em.seed, r)();
    for (std::size_t m = 0; m < models.size(); ++m) {
      try {
        const auto fit = fit_em(sim.data, models[m], ChainVariant::Parametric, spec.n_states, cfg);
        if (fit.converged) estimates[m][r] = fit.theta.emission.beta(0);
      } catch (const Error&) {
        // counted as a failed replicate below
      }
    }
  });
  ReplicationReport report;
  report.spec = spec;
  report.reps = reps;
  for (std::size_t m = 0; m < models.size(); ++m) {
    ModelReplication mr;
    mr.model = models[m];
    for (const auto& e : estimates[m]) {
      if (e) {
        mr.estimates.push_back(*e);
      } else {
        ++mr.failed;
      }
    }
    summarize(mr, spec.beta, reps);
    report.models.push_back(std::move(mr));
  }
  return report;
}

void write_replication_report(const ReplicationReport& report, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) fail(ErrorCode::Io, "cannot write " + path.string());
  out << "scheme,n,T,model,reps,failed,bias,std_dev,mse,valid\n";
  for (const auto& m : report.models) {
    out << to_string(report.spec.scheme) << ',' << report.spec.n << ',' << report.spec.horizon << ','
        << (m.model == ModelKind::LatentMarkov ? "M1" : "M2") << ',' << report.reps << ',' << m.failed << ','
        << format_double(m.bias) << ',' << format_double(m.sd) << ',' << format_double(m.mse) << ','
        << (m.valid ? "true" : "false") << '\n';
  }
  if (!out) fail(ErrorCode::Io, "write failed for " + path.string());
}

}  // namespace lmdrop
