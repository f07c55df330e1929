#include "lmdrop/lmdrop.h"

#include <cstring>
#include <filesystem>
#include <fstream>
#include <memory>
#include <new>
#include <optional>
#include <string>

#include "core/data_model.hpp"
#include "core/em_fitter.hpp"
#include "core/error.hpp"
#include "core/inference.hpp"
#include "core/kv_io.hpp"
#include "core/parameters.hpp"
#include "core/sim_harness.hpp"

using namespace lmdrop;

struct lmd_config {
  ModelConfig config;
};

struct lmd_dataset {
  Dataset data;
  ModelConfig config;
};

struct lmd_truth {
  GroundTruth truth;
};

struct lmd_fit {
  ModelConfig config;
  ParameterSet theta;
  int horizon = 0;
  double loglik = 0.0;
  int n_iter = 0;
  bool converged = false;
  bool refined = false;
  bool spurious = false;
  bool separation = false;
  std::vector<double> trace;
  std::vector<std::string> warnings;
  std::optional<Posteriors> posteriors;
};

struct lmd_bootstrap {
  BootstrapResult result;
};

struct lmd_report {
  ReplicationReport report;
};

namespace {

thread_local std::string g_last_error;

lmd_status to_status(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return LMD_ERR_INVALID_ARGUMENT;
    case ErrorCode::Io: return LMD_ERR_IO;
    case ErrorCode::Parse: return LMD_ERR_PARSE;
    case ErrorCode::DegenerateLikelihood: return LMD_ERR_DEGENERATE;
    case ErrorCode::Numerical: return LMD_ERR_NUMERICAL;
    case ErrorCode::NotConverged: return LMD_ERR_NOT_CONVERGED;
  }
  return LMD_ERR_INTERNAL;
}

template <typename Fn>
lmd_status guarded(Fn&& fn) {
  try {
    g_last_error.clear();
    fn();
    return LMD_OK;
  } catch (const Error& e) {
    g_last_error = e.what();
    return to_status(e.code());
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
    return LMD_ERR_INTERNAL;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return LMD_ERR_INTERNAL;
  }
}

void require(const void* p, const char* what) {
  if (!p) fail(ErrorCode::InvalidArgument, std::string(what) + " must not be null");
}

SchemeSpec to_spec(const lmd_sim_options& o) {
  SchemeSpec s = o.scheme == LMD_SCHEME_JOINT ? SchemeSpec::joint_defaults() : SchemeSpec::conditional_defaults();
  s.n = o.n;
  s.horizon = o.horizon;
  s.seed = o.seed;
  s.beta = o.beta;
  s.intercepts = Eigen::Vector2d(o.intercepts[0], o.intercepts[1]);
  if (s.scheme == Scheme::Conditional) {
    s.chain.gamma << o.gamma[0], o.gamma[1];
    s.chain.phi[0] << o.phi[0][0], o.phi[0][1];
    s.chain.phi[1] << o.phi[1][0], o.phi[1][1];
  } else {
    s.initial = Eigen::Vector2d(o.initial[0], o.initial[1]);
    s.transition << o.transition[0][0], o.transition[0][1], o.transition[1][0], o.transition[1][1];
    s.dropout_logits = Eigen::Vector2d(o.dropout_logits[0], o.dropout_logits[1]);
  }
  return s;
}

EMConfig to_em(const lmd_fit_options& o) {
  EMConfig c;
  c.n_short_starts = o.n_short_starts;
  c.n_long_runs = o.n_long_runs;
  c.max_iter = o.max_iter;
  c.short_run_threshold = o.short_run_threshold;
  c.final_tol = o.final_tol;
  c.refine_with_newton = o.refine != 0;
  c.seed = o.seed;
  c.threads = o.threads;
  c.validate();
  return c;
}

ModelKind to_model(int m) {
  if (m == LMD_MODEL_M1) return ModelKind::LatentMarkov;
  if (m == LMD_MODEL_M2) return ModelKind::TimeConstant;
  fail(ErrorCode::InvalidArgument, "unknown model code " + std::to_string(m));
}

void fill_criteria(const CriteriaRow& r, int model, int J, lmd_criteria* out) {
  out->model = model;
  out->n_states = J;
  out->k = r.k;
  out->n = r.n;
  out->loglik = r.loglik;
  out->aic = r.aic;
  out->aic3 = r.aic3;
  out->has_aicc = r.aicc.has_value() ? 1 : 0;
  out->aicc = r.aicc.value_or(0.0);
  out->aicu = r.aicu.value_or(0.0);
  out->bic = r.bic;
}

int fit_param_count(const lmd_fit& f) {
  return param_count(f.theta.model, f.theta.variant, f.theta.p1(), f.theta.p2(), f.theta.n_states(), f.horizon);
}

Posteriors posteriors_for(const lmd_fit& fit, const Dataset& data) {
  return e_step(data, fit.theta).posteriors;
}

std::string join(const std::vector<std::string>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + v[i];
  return s;
}

void write_decoding_outputs(const lmd_fit& fit, const Dataset& data, const Posteriors& post,
                            const std::filesystem::path& dir) {
  const Decoding dec = local_decode(post);
  write_decoded_states(data, dec, dir / "decoded.csv");
  write_attrition_table(attrition_table(data, dec, fit.theta.n_states()), dir / "attrition.csv");
  write_average_state_probs(average_state_probs(post, data.horizon), dir / "average_state_probs.csv");
  std::vector<std::pair<std::string, std::string>> h{{"n_states", std::to_string(fit.theta.n_states())},
                                                     {"ties", std::to_string(dec.n_ties)}};
  if (fit.theta.n_states() >= 2) h.emplace_back("H", format_double(classification_index(post, fit.theta.n_states())));
  else h.emplace_back("H", "NA");
  write_key_values(dir / "H.txt", h);
}

}  // namespace

extern "C" {

const char* lmd_version(void) { return "0.1.0"; }

const char* lmd_last_error(void) { return g_last_error.c_str(); }

lmd_status lmd_config_create(lmd_config** out) {
  return guarded([&] {
    require(out, "out");
    *out = new lmd_config{};
  });
}

lmd_status lmd_config_load(const char* path, lmd_config** out) {
  return guarded([&] {
    require(path, "path");
    require(out, "out");
    auto c = std::make_unique<lmd_config>();
    c->config = load_model_config(path);
    *out = c.release();
  });
}

lmd_status lmd_config_set(lmd_config* config, const char* key, const char* value) {
  return guarded([&] {
    require(config, "config");
    require(key, "key");
    require(value, "value");
    auto entries = config->config.to_entries();
    KeyValues kv(entries.begin(), entries.end());
    kv[key] = value;
    config->config = parse_model_config(kv);
  });
}

lmd_status lmd_config_write(const lmd_config* config, const char* path) {
  return guarded([&] {
    require(config, "config");
    require(path, "path");
    write_key_values(std::filesystem::path(path), config->config.to_entries());
  });
}

int lmd_config_n_states(const lmd_config* config) { return config ? config->config.n_states : 0; }

void lmd_config_free(lmd_config* config) { delete config; }

lmd_status lmd_dataset_load(const char* path, const lmd_config* config, lmd_dataset** out) {
  return guarded([&] {
    require(path, "path");
    require(config, "config");
    require(out, "out");
    auto d = std::make_unique<lmd_dataset>();
    d->data = load_dataset(path, config->config);
    d->config = config->config;
    *out = d.release();
  });
}

lmd_status lmd_dataset_write(const lmd_dataset* data, const char* path) {
  return guarded([&] {
    require(data, "data");
    require(path, "path");
    write_dataset(data->data, std::filesystem::path(path));
  });
}

size_t lmd_dataset_n_subjects(const lmd_dataset* data) { return data ? data->data.size() : 0; }

int lmd_dataset_horizon(const lmd_dataset* data) { return data ? data->data.horizon : 0; }

lmd_status lmd_dataset_dropout_counts(const lmd_dataset* data, int* counts, size_t len) {
  return guarded([&] {
    require(data, "data");
    require(counts, "counts");
    const auto c = data->data.dropout_counts();
    if (len < c.size()) fail(ErrorCode::InvalidArgument, "counts buffer shorter than horizon");
    std::copy(c.begin(), c.end(), counts);
  });
}

lmd_status lmd_dataset_write_dropout_counts(const lmd_dataset* data, const char* path) {
  return guarded([&] {
    require(data, "data");
    require(path, "path");
    std::ofstream out(path);
    if (!out) fail(ErrorCode::Io, std::string("cannot write ") + path);
    out << "time,dropouts\n";
    const auto c = data->data.dropout_counts();
    for (std::size_t t = 0; t < c.size(); ++t) out << (t + 1) << ',' << c[t] << '\n';
  });
}

void lmd_dataset_free(lmd_dataset* data) { delete data; }

lmd_status lmd_sim_options_default(int scheme, lmd_sim_options* out) {
  return guarded([&] {
    require(out, "out");
    if (scheme != LMD_SCHEME_CONDITIONAL && scheme != LMD_SCHEME_JOINT) {
      fail(ErrorCode::InvalidArgument, "unknown scheme code");
    }
    const SchemeSpec s = scheme == LMD_SCHEME_JOINT ? SchemeSpec::joint_defaults() : SchemeSpec::conditional_defaults();
    *out = lmd_sim_options{};
    out->scheme = scheme;
    out->n = s.n;
    out->horizon = s.horizon;
    out->seed = s.seed;
    out->beta = s.beta;
    out->intercepts[0] = s.intercepts(0);
    out->intercepts[1] = s.intercepts(1);
    const SchemeSpec c = SchemeSpec::conditional_defaults();
    out->gamma[0] = c.chain.gamma(0, 0);
    out->gamma[1] = c.chain.gamma(0, 1);
    for (int k = 0; k < 2; ++k) {
      out->phi[k][0] = c.chain.phi[static_cast<std::size_t>(k)](0, 0);
      out->phi[k][1] = c.chain.phi[static_cast<std::size_t>(k)](0, 1);
    }
    const SchemeSpec j = SchemeSpec::joint_defaults();
    for (int a = 0; a < 2; ++a) {
      out->initial[a] = j.initial(a);
      out->dropout_logits[a] = j.dropout_logits(a);
      for (int b = 0; b < 2; ++b) out->transition[a][b] = j.transition(a, b);
    }
  });
}

lmd_status lmd_simulate(const lmd_sim_options* options, lmd_dataset** data, lmd_truth** truth) {
  return guarded([&] {
    require(options, "options");
    require(data, "data");
    auto sim = simulate(to_spec(*options));
    auto d = std::make_unique<lmd_dataset>();
    d->data = std::move(sim.data);
    d->config = simulation_model_config(2);
    if (truth) *truth = new lmd_truth{std::move(sim.truth)};
    *data = d.release();
  });
}

lmd_status lmd_truth_write(const lmd_truth* truth, const lmd_dataset* data, const char* path) {
  return guarded([&] {
    require(truth, "truth");
    require(data, "data");
    require(path, "path");
    write_ground_truth(truth->truth, data->data, path);
  });
}

lmd_status lmd_sim_manifest_write(const lmd_sim_options* options, const char* path) {
  return guarded([&] {
    require(options, "options");
    require(path, "path");
    auto entries = to_spec(*options).to_entries();
    entries.insert(entries.begin(), {"software_version", lmd_version()});
    write_key_values(std::filesystem::path(path), entries);
  });
}

lmd_status lmd_sim_config(int n_states, lmd_config** out) {
  return guarded([&] {
    require(out, "out");
    auto c = std::make_unique<lmd_config>();
    c->config = simulation_model_config(n_states);
    c->config.validate();
    *out = c.release();
  });
}

void lmd_truth_free(lmd_truth* truth) { delete truth; }

void lmd_fit_options_default(lmd_fit_options* out) {
  if (!out) return;
  const EMConfig c;
  out->model = LMD_MODEL_M1;
  out->variant = LMD_VARIANT_PARAMETRIC;
  out->n_states = 0;
  out->n_short_starts = c.n_short_starts;
  out->n_long_runs = c.n_long_runs;
  out->max_iter = c.max_iter;
  out->short_run_threshold = c.short_run_threshold;
  out->final_tol = c.final_tol;
  out->refine = c.refine_with_newton ? 1 : 0;
  out->seed = c.seed;
  out->threads = 0;
}

lmd_status lmd_fit_run(const lmd_dataset* data, const lmd_config* config, const lmd_fit_options* options,
                       lmd_fit** out) {
  return guarded([&] {
    require(data, "data");
    require(options, "options");
    require(out, "out");
    ModelConfig mc = config ? config->config : data->config;
    if (options->n_states > 0) mc.n_states = options->n_states;
    if (options->variant == LMD_VARIANT_SATURATED) mc.chain_variant = ChainVariant::Saturated;
    else if (options->variant == LMD_VARIANT_PARAMETRIC) mc.chain_variant = ChainVariant::Parametric;
    else fail(ErrorCode::InvalidArgument, "unknown variant code");
    mc.validate();
    const ModelKind model = to_model(options->model);
    FitResult r = fit_em(data->data, model, mc.chain_variant, mc.n_states, to_em(*options));
    auto f = std::make_unique<lmd_fit>();
    f->config = mc;
    f->theta = std::move(r.theta);
    f->horizon = data->data.horizon;
    f->loglik = r.loglik;
    f->n_iter = r.n_iter;
    f->converged = r.converged;
    f->refined = r.refined;
    f->spurious = r.spurious_flag;
    f->separation = r.separation_flag;
    f->trace = std::move(r.loglik_trace);
    f->warnings = std::move(r.warnings);
    f->posteriors = std::move(r.posteriors);
    *out = f.release();
  });
}

lmd_status lmd_fit_write(const lmd_fit* fit, const lmd_dataset* data, const char* dir) {
  return guarded([&] {
    require(fit, "fit");
    require(dir, "dir");
    const std::filesystem::path d(dir);
    std::filesystem::create_directories(d);
    const auto& th = fit->theta;
    std::vector<std::pair<std::string, std::string>> meta{
        {"software_version", lmd_version()},
        {"model", to_string(th.model)},
        {"variant", to_string(th.variant)},
        {"n_states", std::to_string(th.n_states())},
        {"p1", std::to_string(th.p1())},
        {"p2", std::to_string(th.p2())},
        {"horizon", std::to_string(fit->horizon)},
        {"n_params", std::to_string(fit_param_count(*fit))},
        {"loglik", format_double(fit->loglik)},
        {"n_iter", std::to_string(fit->n_iter)},
        {"converged", fit->converged ? "true" : "false"},
        {"refined", fit->refined ? "true" : "false"},
        {"spurious", fit->spurious ? "true" : "false"},
        {"separation", fit->separation ? "true" : "false"},
    };
    if (th.is_saturated()) {
      std::vector<std::string> unseen;
      for (std::size_t t = 0; t < th.saturated.observed.size(); ++t) {
        if (!th.saturated.observed[t]) unseen.push_back(std::to_string(t + 1));
      }
      meta.emplace_back("unseen_strata", join(unseen));
    }
    for (std::size_t w = 0; w < fit->warnings.size(); ++w) {
      meta.emplace_back("warning." + std::to_string(w + 1), fit->warnings[w]);
    }
    for (const auto& [k, v] : fit->config.to_entries()) meta.emplace_back("config." + k, v);
    write_key_values(d / "fit.txt", meta);
    write_key_values(d / "params.txt", parameter_entries(th));
    {
      std::ofstream tr(d / "trace.csv");
      if (!tr) fail(ErrorCode::Io, "cannot write trace.csv");
      tr << "iteration,loglik\n";
      for (std::size_t i = 0; i < fit->trace.size(); ++i) tr << i << ',' << format_double(fit->trace[i]) << '\n';
    }
    if (data) {
      const Posteriors post = fit->posteriors ? *fit->posteriors : posteriors_for(*fit, data->data);
      write_posteriors(data->data, post, d / "posteriors.csv");
      write_decoding_outputs(*fit, data->data, post, d);
    }
  });
}

lmd_status lmd_fit_load(const char* dir, lmd_fit** out) {
  return guarded([&] {
    require(dir, "dir");
    require(out, "out");
    const std::filesystem::path d(dir);
    const KeyValues meta = read_key_values(d / "fit.txt");
    auto get = [&](const std::string& k) {
      const auto it = meta.find(k);
      if (it == meta.end()) fail(ErrorCode::Parse, "fit.txt is missing '" + k + "'");
      return it->second;
    };
    auto f = std::make_unique<lmd_fit>();
    KeyValues cfg;
    for (const auto& [k, v] : meta) {
      if (k.rfind("config.", 0) == 0) cfg[k.substr(7)] = v;
    }
    f->config = parse_model_config(cfg);
    const ModelKind model = parse_model_kind(get("model"));
    const ChainVariant variant = parse_chain_variant(get("variant"));
    const int J = static_cast<int>(parse_long(get("n_states"), "n_states"));
    const int p1 = static_cast<int>(parse_long(get("p1"), "p1"));
    const int p2 = static_cast<int>(parse_long(get("p2"), "p2"));
    f->horizon = static_cast<int>(parse_long(get("horizon"), "horizon"));
    f->theta = parameters_from_entries(read_key_values(d / "params.txt"), model, variant, J, p1, p2, f->horizon);
    if (f->theta.is_saturated()) {
      const auto it = meta.find("unseen_strata");
      if (it != meta.end()) {
        for (const auto& s : split_list(it->second)) {
          const long t = parse_long(s, "unseen_strata");
          if (t < 1 || t > f->horizon) fail(ErrorCode::Parse, "unseen stratum out of range");
          f->theta.saturated.observed[static_cast<std::size_t>(t - 1)] = false;
        }
      }
    }
    f->loglik = parse_double(get("loglik"), "loglik");
    f->n_iter = static_cast<int>(parse_long(get("n_iter"), "n_iter"));
    f->converged = parse_bool(get("converged"), "converged");
    *out = f.release();
  });
}

int lmd_fit_converged(const lmd_fit* fit) { return fit && fit->converged ? 1 : 0; }

double lmd_fit_loglik(const lmd_fit* fit) { return fit ? fit->loglik : 0.0; }

int lmd_fit_n_params(const lmd_fit* fit) { return fit ? fit_param_count(*fit) : 0; }

int lmd_fit_n_states(const lmd_fit* fit) { return fit ? fit->theta.n_states() : 0; }

int lmd_fit_model(const lmd_fit* fit) {
  return fit && fit->theta.model == ModelKind::TimeConstant ? LMD_MODEL_M2 : LMD_MODEL_M1;
}

lmd_status lmd_fit_beta(const lmd_fit* fit, double* beta, size_t len) {
  return guarded([&] {
    require(fit, "fit");
    require(beta, "beta");
    const auto& b = fit->theta.emission.beta;
    if (len < static_cast<size_t>(b.size())) fail(ErrorCode::InvalidArgument, "beta buffer too short");
    for (Eigen::Index i = 0; i < b.size(); ++i) beta[i] = b(i);
  });
}

lmd_status lmd_fit_criteria(const lmd_fit* fit, size_t n_subjects, lmd_criteria* out) {
  return guarded([&] {
    require(fit, "fit");
    require(out, "out");
    const CriteriaRow r = criteria_row(fit->loglik, fit_param_count(*fit), static_cast<int>(n_subjects));
    fill_criteria(r, lmd_fit_model(fit), fit->theta.n_states(), out);
  });
}

void lmd_fit_free(lmd_fit* fit) { delete fit; }

lmd_status lmd_criteria_compute(double loglik, int k, int n, lmd_criteria* out) {
  return guarded([&] {
    require(out, "out");
    fill_criteria(information_criteria(loglik, k, n), LMD_MODEL_M1, 0, out);
  });
}

lmd_status lmd_criteria_table_write(const lmd_criteria* rows, size_t n_rows, const char* path) {
  return guarded([&] {
    require(rows, "rows");
    require(path, "path");
    std::vector<CriteriaTableRow> table;
    for (size_t i = 0; i < n_rows; ++i) {
      const auto& c = rows[i];
      CriteriaTableRow t;
      t.model = to_model(c.model);
      t.n_states = c.n_states;
      t.row = criteria_row(c.loglik, c.k, c.n);
      table.push_back(t);
    }
    write_criteria_table(table, std::filesystem::path(path));
  });
}

lmd_status lmd_decode_write(const lmd_fit* fit, const lmd_dataset* data, const char* dir) {
  return guarded([&] {
    require(fit, "fit");
    require(data, "data");
    require(dir, "dir");
    const std::filesystem::path d(dir);
    std::filesystem::create_directories(d);
    const Posteriors post = posteriors_for(*fit, data->data);
    write_posteriors(data->data, post, d / "posteriors.csv");
    write_decoding_outputs(*fit, data->data, post, d);
  });
}

lmd_status lmd_classification_index(const lmd_fit* fit, const lmd_dataset* data, double* out) {
  return guarded([&] {
    require(fit, "fit");
    require(data, "data");
    require(out, "out");
    *out = classification_index(posteriors_for(*fit, data->data), fit->theta.n_states());
  });
}

lmd_status lmd_bootstrap_run(const lmd_dataset* data, const lmd_fit* fit, int B, uint64_t seed, int threads,
                             int resample_dropout, lmd_bootstrap** out) {
  return guarded([&] {
    require(data, "data");
    require(fit, "fit");
    require(out, "out");
    if (!fit->converged) fail(ErrorCode::NotConverged, "bootstrap requires a converged fit");
    BootstrapOptions opts;
    opts.B = B;
    opts.seed = seed;
    opts.threads = threads;
    opts.resample_dropout = resample_dropout != 0;
    auto b = std::make_unique<lmd_bootstrap>();
    b->result = parametric_bootstrap(data->data, fit->theta, opts);
    *out = b.release();
  });
}

lmd_status lmd_bootstrap_write(const lmd_bootstrap* result, const char* path) {
  return guarded([&] {
    require(result, "result");
    require(path, "path");
    write_bootstrap_table(result->result, std::filesystem::path(path));
  });
}

int lmd_bootstrap_n_failed(const lmd_bootstrap* result) { return result ? result->result.n_failed : 0; }

size_t lmd_bootstrap_n_params(const lmd_bootstrap* result) {
  return result ? static_cast<size_t>(result->result.se.size()) : 0;
}

lmd_status lmd_bootstrap_se(const lmd_bootstrap* result, double* se, size_t len) {
  return guarded([&] {
    require(result, "result");
    require(se, "se");
    const auto& v = result->result.se;
    if (len < static_cast<size_t>(v.size())) fail(ErrorCode::InvalidArgument, "se buffer too short");
    for (Eigen::Index i = 0; i < v.size(); ++i) se[i] = v(i);
  });
}

void lmd_bootstrap_free(lmd_bootstrap* result) { delete result; }

lmd_status lmd_replicate_run(const lmd_sim_options* sim, int reps, const lmd_fit_options* fit, lmd_report** out) {
  return guarded([&] {
    require(sim, "sim");
    require(fit, "fit");
    require(out, "out");
    auto r = std::make_unique<lmd_report>();
    r->report = run_replications(to_spec(*sim), reps, {ModelKind::LatentMarkov, ModelKind::TimeConstant},
                                 to_em(*fit), fit->threads);
    *out = r.release();
  });
}

lmd_status lmd_report_write(const lmd_report* report, const char* path) {
  return guarded([&] {
    require(report, "report");
    require(path, "path");
    write_replication_report(report->report, std::filesystem::path(path));
  });
}

lmd_status lmd_report_summary(const lmd_report* report, int model, double* bias, double* sd, double* mse,
                              int* failed) {
  return guarded([&] {
    require(report, "report");
    const ModelKind kind = to_model(model);
    for (const auto& m : report->report.models) {
      if (m.model != kind) continue;
      if (bias) *bias = m.bias;
      if (sd) *sd = m.sd;
      if (mse) *mse = m.mse;
      if (failed) *failed = m.failed;
      return;
    }
    fail(ErrorCode::InvalidArgument, "model not present in report");
  });
}

int lmd_report_valid(const lmd_report* report) {
  if (!report) return 0;
  for (const auto& m : report->report.models) {
    if (!m.valid) return 0;
  }
  return 1;
}

void lmd_report_free(lmd_report* report) { delete report; }

}  // extern "C"
