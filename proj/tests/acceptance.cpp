// End-to-end acceptance run: one PASS/FAIL line per criterion, nonzero exit if any fails.
// Heavy criteria (6, 7) take several minutes.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "core/em_fitter.hpp"
#include "core/error.hpp"
#include "core/inference.hpp"
#include "core/likelihood.hpp"
#include "core/parameters.hpp"
#include "core/sim_harness.hpp"
#include "support.hpp"

using namespace lmdrop;
using namespace testsupport;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

int g_failures = 0;

void report(int id, const char* what, bool ok, const std::string& detail) {
  std::printf("[%s] %2d %s: %s\n", ok ? "PASS" : "FAIL", id, what, detail.c_str());
  std::fflush(stdout);
  if (!ok) ++g_failures;
}

template <class... A>
std::string fmt(const char* f, A... a) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, a...);
  return buf;
}

int threads() { return std::max(1u, std::thread::hardware_concurrency()); }

// Sum over all J^S latent paths, written out directly.
double enumerate_loglik(const SubjectPanel& panel, const ChainLaws& laws, const EmissionParams& em) {
  const int J = static_cast<int>(em.u.rows());
  const int S = panel.dropout_time();
  std::vector<std::vector<double>> f(static_cast<std::size_t>(S), std::vector<double>(static_cast<std::size_t>(J)));
  for (int t = 0; t < S; ++t) {
    for (int j = 0; j < J; ++j) {
      const double eta = panel.x1.row(t).dot(em.beta) + panel.x2.row(t).dot(em.u.row(j));
      const double p = 1.0 / (1.0 + std::exp(-eta));
      f[t][j] = panel.responses[static_cast<std::size_t>(t)] == 1 ? p : 1.0 - p;
    }
  }
  std::vector<int> path(static_cast<std::size_t>(S), 0);
  double total = 0.0;
  for (;;) {
    double w = laws.initial(path[0]) * f[0][path[0]];
    for (int t = 1; t < S; ++t) w *= laws.transition(path[t - 1], path[t]) * f[t][path[t]];
    total += w;
    int t = S - 1;
    while (t >= 0 && ++path[t] == J) path[t--] = 0;
    if (t < 0) break;
  }
  return std::log(total);
}

void criterion_oracle() {
  const auto t0 = Clock::now();
  Rng rng(101);
  double worst = 0.0;
  for (int rep = 0; rep < 1000; ++rep) {
    const int J = 1 + rep % 3;
    const int S = 1 + static_cast<int>(rng() % 6);
    const int p1 = 1 + rep % 2;
    const auto panel = random_panel(rng, S, p1, 1);
    const auto laws = random_laws(rng, J);
    const auto em = random_emission(rng, J, p1, 1);
    const double fb = forward_loglik(panel, laws, em);
    const double bf = enumerate_loglik(panel, laws, em);
    worst = std::max(worst, std::abs(fb - bf) / std::abs(bf));
  }
  const double secs = seconds_since(t0);
  report(1, "forward-backward vs path enumeration", worst <= 1e-10 && secs < 10.0,
         fmt("1000 instances, max rel err %.3g (<= 1e-10), %.2f s (< 10 s)", worst, secs));
}

void criterion_monotone() {
  const auto t0 = Clock::now();
  Rng rng(202);
  int violations = 0, fits = 0, errors = 0;
  double worst_drop = 0.0;
  for (int rep = 0; rep < 200; ++rep) {
    const int kind = rep % 3;
    const ModelKind model = kind == 2 ? ModelKind::TimeConstant : ModelKind::LatentMarkov;
    const ChainVariant variant = kind == 1 ? ChainVariant::Saturated : ChainVariant::Parametric;
    const int J = 2 + rep % 2;
    const int T = 3 + rep % 4;
    const auto data = random_dataset(rng, 60, T, 1 + rep % 2, 1);
    EMConfig cfg;
    cfg.n_short_starts = 2;
    cfg.n_long_runs = 1;
    cfg.seed = static_cast<std::uint64_t>(rep) + 1;
    cfg.monotone_slack = std::numeric_limits<double>::infinity();  // count here instead of throwing
    try {
      const auto fit = fit_em(data, model, variant, J, cfg);
      ++fits;
      for (std::size_t i = 1; i < fit.loglik_trace.size(); ++i) {
        const double drop = fit.loglik_trace[i - 1] - fit.loglik_trace[i];
        worst_drop = std::max(worst_drop, drop);
        if (drop > 1e-8) ++violations;
      }
    } catch (const Error&) {
      ++errors;
    }
  }
  const double secs = seconds_since(t0);
  report(2, "EM monotonicity", violations == 0 && errors == 0 && secs < 300.0,
         fmt("%d fits, %d violations beyond 1e-8 (largest drop %.2g), %d errors, %.1f s (< 300 s)", fits,
             violations, worst_drop, errors, secs));
}

void criterion_gradient() {
  Rng rng(303);
  double worst = 0.0;
  for (int rep = 0; rep < 50; ++rep) {
    const int J = 1 + rep % 3;
    const auto model = rep % 2 ? ModelKind::TimeConstant : ModelKind::LatentMarkov;
    const int p1 = 1 + rep % 2;
    const int T = 3 + rep % 4;
    const auto data = random_dataset(rng, 12, T, p1, 1);
    const auto th = random_theta(rng, model, ChainVariant::Parametric, J, p1, 1, T);
    worst = std::max(worst, max_rel_error(score(data, th), numeric_score(data, th)));
  }
  report(3, "analytic score vs central differences", worst <= 1e-5,
         fmt("50 instances, max rel err %.3g (<= 1e-5)", worst));
}

void criterion_table_arithmetic() {
  struct Row {
    double ll;
    int k;
    double aic, aic3, aicc, aicu, bic;
  };
  // Published values.
  const Row rows[] = {{-2726.000, 24, 5499.998, 5523.998, 5500.722, 5525.909, 5630.278},
                      {-2764.899, 13, 5555.799, 5568.799, 5556.017, 5570.076, 5626.368}};
  double worst = 0.0;
  for (const auto& r : rows) {
    const auto c = information_criteria(r.ll, r.k, 1683);
    for (double d : {c.aic - r.aic, c.aic3 - r.aic3, *c.aicc - r.aicc, *c.aicu - r.aicu, c.bic - r.bic}) {
      worst = std::max(worst, std::abs(d));
    }
  }
  report(4, "information-criteria arithmetic", worst <= 0.01, fmt("max abs deviation %.4f (<= 0.01)", worst));
}

void criterion_param_counts() {
  const int a = param_count(ModelKind::LatentMarkov, ChainVariant::Parametric, 5, 1, 2, 10);
  const int b = param_count(ModelKind::LatentMarkov, ChainVariant::Parametric, 5, 1, 3, 10);
  const int c = param_count(ModelKind::TimeConstant, ChainVariant::Parametric, 5, 1, 2, 10);
  const int d = param_count(ModelKind::TimeConstant, ChainVariant::Parametric, 5, 1, 3, 10);
  const int e = param_count(ModelKind::TimeConstant, ChainVariant::Parametric, 5, 1, 4, 10);
  report(5, "parameter counts", a == 13 && b == 24 && c == 9 && d == 12 && e == 15,
         fmt("M1 J=2,3: %d,%d (13,24); M2 J=2,3,4: %d,%d,%d (9,12,15)", a, b, c, d, e));
}

EMConfig replication_config() {
  EMConfig em;
  em.n_short_starts = 5;
  em.n_long_runs = 5;
  em.seed = 1;
  return em;
}

const ModelReplication& find(const ReplicationReport& r, ModelKind m) {
  for (const auto& x : r.models) {
    if (x.model == m) return x;
  }
  throw std::runtime_error("model missing from report");
}

void criterion_conditional() {
  const auto t0 = Clock::now();
  auto spec = SchemeSpec::conditional_defaults();
  spec.n = 500;
  spec.horizon = 10;
  spec.seed = 1;
  const auto rep = run_replications(spec, 50, {ModelKind::LatentMarkov, ModelKind::TimeConstant},
                                    replication_config(), threads());
  const auto& m1 = find(rep, ModelKind::LatentMarkov);
  const auto& m2 = find(rep, ModelKind::TimeConstant);
  const double secs = seconds_since(t0);
  const bool ok = m1.valid && m2.valid && std::abs(m1.bias) <= 0.03 && m1.mse <= 0.004 && m2.bias >= -0.17 &&
                  m2.bias <= -0.05 && m2.mse >= 0.006 && m2.mse <= 0.025 && secs < 1800.0;
  report(6, "conditional-scheme recovery", ok,
         fmt("M1 bias %.4f (|.|<=0.03) sd %.4f mse %.4f (<=0.004) failed %d; "
             "M2 bias %.4f ([-0.17,-0.05]) sd %.4f mse %.4f ([0.006,0.025]) failed %d; %.0f s (< 1800 s)",
             m1.bias, m1.sd, m1.mse, m1.failed, m2.bias, m2.sd, m2.mse, m2.failed, secs));
}

void criterion_joint() {
  const auto t0 = Clock::now();
  auto spec = SchemeSpec::joint_defaults();
  spec.n = 500;
  spec.horizon = 5;
  spec.seed = 1;
  const auto rep = run_replications(spec, 50, {ModelKind::LatentMarkov, ModelKind::TimeConstant},
                                    replication_config(), threads());
  const auto& m1 = find(rep, ModelKind::LatentMarkov);
  const auto& m2 = find(rep, ModelKind::TimeConstant);
  const double secs = seconds_since(t0);
  const bool ok = m1.valid && m2.valid && std::abs(m1.bias) <= 0.04 && m2.bias <= -0.05 && secs < 1200.0;
  report(7, "joint-scheme recovery", ok,
         fmt("M1 bias %.4f (|.|<=0.04) sd %.4f failed %d; M2 bias %.4f (<=-0.05) sd %.4f failed %d; "
             "%.0f s (< 1200 s)",
             m1.bias, m1.sd, m1.failed, m2.bias, m2.sd, m2.failed, secs));
}

void criterion_generator() {
  auto spec = SchemeSpec::joint_defaults();
  spec.n = 10000;
  spec.horizon = 10;
  spec.seed = 8;
  const auto sim = simulate(spec);
  Eigen::MatrixXd trans = Eigen::MatrixXd::Zero(2, 2);
  Eigen::Vector2d at_risk = Eigen::Vector2d::Zero(), events = Eigen::Vector2d::Zero();
  for (std::size_t i = 0; i < sim.truth.states.size(); ++i) {
    const auto& path = sim.truth.states[i];
    const int s = sim.truth.dropout[i];
    for (int t = 0; t < s; ++t) {
      const int j = path[static_cast<std::size_t>(t)];
      if (t > 0) trans(path[static_cast<std::size_t>(t - 1)], j) += 1.0;
      at_risk(j) += 1.0;
      if (sim.truth.dropout_fired[i] && t + 1 == s) events(j) += 1.0;
    }
  }
  for (int k = 0; k < 2; ++k) trans.row(k) /= trans.row(k).sum();
  Eigen::Matrix2d target;
  target << 0.8, 0.2, 0.2, 0.8;
  const double trans_err = (trans - target).cwiseAbs().maxCoeff();
  const Eigen::Vector2d hazard = events.cwiseQuotient(at_risk);
  const double h0 = 1.0 / (1.0 + std::exp(3.0)), h1 = 1.0 / (1.0 + std::exp(1.5));
  const double haz_err = std::max(std::abs(hazard(0) - h0), std::abs(hazard(1) - h1));
  report(8, "generator fidelity", trans_err <= 0.02 && haz_err <= 0.01,
         fmt("transitions (%.4f,%.4f)/(%.4f,%.4f) err %.4f (<=0.02); hazards (%.4f,%.4f) vs (%.4f,%.4f) "
             "err %.4f (<=0.01)",
             trans(0, 0), trans(0, 1), trans(1, 0), trans(1, 1), trans_err, hazard(0), hazard(1), h0, h1,
             haz_err));
}

Posteriors posteriors_from(const std::vector<Eigen::MatrixXd>& xis) {
  Posteriors p;
  for (const auto& xi : xis) {
    SubjectPosterior s;
    s.xi = xi;
    p.subjects.push_back(std::move(s));
  }
  return p;
}

void criterion_h_index() {
  Eigen::MatrixXd degenerate(3, 2);
  degenerate << 1, 0, 0, 1, 1, 0;
  Eigen::MatrixXd uniform = Eigen::MatrixXd::Constant(3, 3, 1.0 / 3.0);
  Eigen::MatrixXd hand(2, 2);
  hand << 0.9, 0.1, 0.3, 0.7;
  const double a = classification_index(posteriors_from({degenerate, degenerate}), 2);
  const double b = classification_index(posteriors_from({uniform}), 3);
  const double c = classification_index(posteriors_from({hand}), 2);
  report(9, "classification index", a == 1.0 && b == 0.0 && c == 0.6,
         fmt("degenerate %.17g (1), uniform %.17g (0), hand case %.17g (0.6)", a, b, c));
}

std::vector<std::string> lines_of(const std::filesystem::path& path) {
  std::ifstream in(path);
  std::vector<std::string> out;
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

std::vector<std::string> split(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  for (std::string cell; std::getline(ss, cell, ',');) out.push_back(cell);
  return out;
}

void criterion_output_contracts() {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "lmdrop_acceptance";
  fs::remove_all(dir);
  fs::create_directories(dir);
  auto spec = SchemeSpec::conditional_defaults();
  spec.n = 300;
  spec.seed = 10;
  const auto sim = simulate(spec);
  const int n = static_cast<int>(sim.data.size());
  EMConfig cfg;
  cfg.n_short_starts = 3;
  cfg.n_long_runs = 2;
  cfg.threads = threads();
  std::vector<std::string> problems;

  std::vector<CriteriaTableRow> rows;
  FitResult best;
  for (auto model : {ModelKind::LatentMarkov, ModelKind::TimeConstant}) {
    for (int J = 1; J <= 3; ++J) {
      auto fit = fit_em(sim.data, model, ChainVariant::Parametric, J, cfg);
      const int k = param_count(model, ChainVariant::Parametric, 1, 1, J, spec.horizon);
      rows.push_back({model, J, criteria_row(fit.loglik, k, n)});
      if (model == ModelKind::LatentMarkov && J == 2) best = std::move(fit);
    }
  }
  write_criteria_table(rows, dir / "criteria.csv");
  const auto crit = lines_of(dir / "criteria.csv");
  if (crit.size() != rows.size() + 1 || crit[0] != "model,J,k,loglik,AIC,AIC3,AICc,AICu,BIC,best_by") {
    problems.emplace_back("criteria header/rows");
  }
  for (std::size_t r = 1; r < crit.size(); ++r) {
    if (split(crit[r]).size() < 9) problems.emplace_back("criteria row width");
  }

  const auto dec = local_decode(best.posteriors);
  write_attrition_table(attrition_table(sim.data, dec, 2), dir / "attrition.csv");
  const auto att = lines_of(dir / "attrition.csv");
  std::vector<int> col(static_cast<std::size_t>(spec.horizon), 0);
  if (att.size() != 3 || att[0] != "state,S=1,S=2,S=3,S=4,S=5,S=6,S=7,S=8,S=9,S=10") {
    problems.emplace_back("attrition header/rows");
  } else {
    for (std::size_t r = 1; r < att.size(); ++r) {
      const auto cells = split(att[r]);
      if (cells.size() != col.size() + 1 || cells[0] != std::to_string(r)) {
        problems.emplace_back("attrition row");
        continue;
      }
      for (std::size_t t = 0; t < col.size(); ++t) col[t] += std::stoi(cells[t + 1]);
    }
    std::vector<int> expected(col.size(), 0);
    for (const auto& p : sim.data.panels) ++expected[static_cast<std::size_t>(p.dropout_time() - 1)];
    if (col != expected) problems.emplace_back("attrition columns do not add up to dropout counts");
  }

  write_average_state_probs(average_state_probs(best.posteriors, spec.horizon), dir / "avg.csv");
  const auto avg = lines_of(dir / "avg.csv");
  double worst = 0.0;
  if (avg.size() != static_cast<std::size_t>(spec.horizon) + 1 || avg[0] != "time,state1,state2") {
    problems.emplace_back("average-probability header/rows");
  } else {
    for (std::size_t r = 1; r < avg.size(); ++r) {
      const auto cells = split(avg[r]);
      if (cells.size() != 3 || cells[0] != std::to_string(r)) {
        problems.emplace_back("average-probability row");
        continue;
      }
      worst = std::max(worst, std::abs(std::stod(cells[1]) + std::stod(cells[2]) - 1.0));
    }
  }
  if (worst > 1e-9) problems.emplace_back("average-probability rows do not sum to 1");
  fs::remove_all(dir);

  std::string detail = fmt("criteria %zu rows, attrition %zu rows, average probs max |sum-1| %.2g",
                           crit.size() - 1, att.size() - 1, worst);
  for (const auto& p : problems) detail += "; " + p;
  report(10, "output table contracts", problems.empty(), detail);
}

}  // namespace

int main(int argc, char** argv) {
  // Optional list of criterion numbers to run; default is all.
  std::vector<int> only;
  for (int i = 1; i < argc; ++i) only.push_back(std::atoi(argv[i]));
  auto want = [&](int id) { return only.empty() || std::find(only.begin(), only.end(), id) != only.end(); };
  const std::vector<std::pair<int, std::function<void()>>> all = {
      {1, criterion_oracle},        {2, criterion_monotone},  {3, criterion_gradient},
      {4, criterion_table_arithmetic}, {5, criterion_param_counts}, {6, criterion_conditional},
      {7, criterion_joint},         {8, criterion_generator}, {9, criterion_h_index},
      {10, criterion_output_contracts}};
  for (const auto& [id, fn] : all) {
    if (!want(id)) continue;
    try {
      fn();
    } catch (const std::exception& e) {
      report(id, "criterion raised an error", false, e.what());
    }
  }
  std::printf("%d criteria failed\n", g_failures);
  return g_failures == 0 ? 0 : 1;
}
