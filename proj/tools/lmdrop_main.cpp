// lmdrop command-line driver. Talks to the library only through the C API.
#include <lmdrop/lmdrop.h>

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <thread>
#include <vector>

namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitUsage = 2;
constexpr int kExitNotConverged = 3;
constexpr int kExitBadInput = 4;

struct CommandFailed {
  int exit_code;
};

int exit_code_for(lmd_status s) {
  switch (s) {
    case LMD_OK: return kExitOk;
    case LMD_ERR_NOT_CONVERGED: return kExitNotConverged;
    case LMD_ERR_INVALID_ARGUMENT:
    case LMD_ERR_IO:
    case LMD_ERR_PARSE: return kExitBadInput;
    default: return kExitFailure;
  }
}

void check(lmd_status s, const std::string& what) {
  if (s == LMD_OK) return;
  std::cerr << "lmdrop: " << what << ": " << lmd_last_error() << '\n';
  throw CommandFailed{exit_code_for(s)};
}

// RAII over the C handles.
template <typename T, void (*Free)(T*)>
class Handle {
 public:
  Handle() = default;
  Handle(const Handle&) = delete;
  Handle& operator=(const Handle&) = delete;
  ~Handle() { if (p_) Free(p_); }
  T** out() { return &p_; }
  T* get() const { return p_; }

 private:
  T* p_ = nullptr;
};

using Config = Handle<lmd_config, lmd_config_free>;
using Data = Handle<lmd_dataset, lmd_dataset_free>;
using Truth = Handle<lmd_truth, lmd_truth_free>;
using Fit = Handle<lmd_fit, lmd_fit_free>;
using Boot = Handle<lmd_bootstrap, lmd_bootstrap_free>;
using Report = Handle<lmd_report, lmd_report_free>;

int env_int(const char* name, int fallback) {
  const char* v = std::getenv(name);
  if (!v || !*v) return fallback;
  try {
    return std::stoi(v);
  } catch (...) {
    std::cerr << "lmdrop: ignoring non-numeric " << name << '\n';
    return fallback;
  }
}

uint64_t env_seed(uint64_t fallback) {
  const char* v = std::getenv("LMDROP_SEED");
  if (!v || !*v) return fallback;
  try {
    return std::stoull(v);
  } catch (...) {
    std::cerr << "lmdrop: ignoring non-numeric LMDROP_SEED\n";
    return fallback;
  }
}

struct Common {
  uint64_t seed = 1;
  int threads = 0;
};

void resolve(Common& c, const CLI::Option* seed_opt, const CLI::Option* threads_opt) {
  if (seed_opt->count() == 0) c.seed = env_seed(c.seed);
  if (threads_opt->count() == 0) c.threads = env_int("LMDROP_THREADS", 0);
  if (c.threads <= 0) c.threads = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
}

void write_manifest(const fs::path& dir, const std::string& command,
                    const std::vector<std::pair<std::string, std::string>>& entries) {
  std::ofstream out(dir / "manifest.txt");
  if (!out) {
    std::cerr << "lmdrop: cannot write manifest in " << dir << '\n';
    throw CommandFailed{kExitBadInput};
  }
  out << "command = " << command << '\n' << "software_version = " << lmd_version() << '\n';
  for (const auto& [k, v] : entries) out << k << " = " << v << '\n';
}

int model_code(const std::string& s) {
  if (s == "m1") return LMD_MODEL_M1;
  if (s == "m2") return LMD_MODEL_M2;
  throw CLI::ValidationError("--model", "expected m1 or m2");
}

void load_config(const std::optional<std::string>& path, int n_states, Config& cfg) {
  if (path) check(lmd_config_load(path->c_str(), cfg.out()), "loading config");
  else check(lmd_config_create(cfg.out()), "creating config");
  if (n_states > 0) check(lmd_config_set(cfg.get(), "n_states", std::to_string(n_states).c_str()), "setting J");
}

void make_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) {
    std::cerr << "lmdrop: cannot create " << dir << ": " << ec.message() << '\n';
    throw CommandFailed{kExitBadInput};
  }
}

std::string model_name(int m) { return m == LMD_MODEL_M2 ? "m2" : "m1"; }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Latent Markov models for binary panel data with monotone dropout"};
  app.require_subcommand(1);
  app.set_version_flag("--version", lmd_version());

  Common common;
  auto add_common = [&](CLI::App* sub) {
    auto* s = sub->add_option("--seed", common.seed, "Master seed (env LMDROP_SEED)");
    auto* t = sub->add_option("--threads", common.threads, "Worker threads (env LMDROP_THREADS; default all cores)");
    return std::pair{s, t};
  };

  // simulate
  auto* sim = app.add_subcommand("simulate", "Generate a dataset from one of the two simulation schemes");
  std::string scheme = "conditional";
  int sim_n = 0;
  std::optional<int> sim_T;
  std::string sim_out;
  sim->add_option("--scheme", scheme, "conditional | joint")->check(CLI::IsMember({"conditional", "joint"}));
  sim->add_option("--n", sim_n, "Number of subjects")->required()->check(CLI::PositiveNumber);
  sim->add_option("--T", sim_T, "Number of occasions")->check(CLI::PositiveNumber);
  sim->add_option("--out", sim_out, "Output directory")->required();
  auto [sim_seed, sim_threads] = add_common(sim);

  // fit
  auto* fit = app.add_subcommand("fit", "Fit a model by EM");
  std::string fit_data, fit_out, fit_model = "m1", fit_variant = "parametric";
  std::optional<std::string> fit_config;
  int fit_J = 0, fit_starts = -1, fit_long = -1, fit_max_iter = -1;
  bool no_refine = false;
  fit->add_option("--data", fit_data, "Long-format dataset")->required()->check(CLI::ExistingFile);
  fit->add_option("--config", fit_config, "Model config")->check(CLI::ExistingFile);
  fit->add_option("--model", fit_model, "m1 | m2")->check(CLI::IsMember({"m1", "m2"}));
  fit->add_option("--variant", fit_variant, "parametric | saturated")->check(CLI::IsMember({"parametric", "saturated"}));
  fit->add_option("--J", fit_J, "Number of latent states (overrides config)")->check(CLI::PositiveNumber);
  fit->add_option("--starts", fit_starts, "Random short-run starts")->check(CLI::PositiveNumber);
  fit->add_option("--long-runs", fit_long, "Candidates carried to convergence")->check(CLI::PositiveNumber);
  fit->add_option("--max-iter", fit_max_iter, "EM iteration cap per run")->check(CLI::PositiveNumber);
  fit->add_flag("--no-refine", no_refine, "Skip quasi-Newton refinement");
  fit->add_option("--out", fit_out, "Output directory")->required();
  auto [fit_seed, fit_threads] = add_common(fit);

  // select
  auto* sel = app.add_subcommand("select", "Information criteria over a range of J");
  std::string sel_data, sel_out;
  std::optional<std::string> sel_config;
  int j_min = 1, j_max = 4;
  std::vector<std::string> sel_models{"m1", "m2"};
  sel->add_option("--data", sel_data, "Long-format dataset")->required()->check(CLI::ExistingFile);
  sel->add_option("--config", sel_config, "Model config")->check(CLI::ExistingFile);
  sel->add_option("--J-min", j_min, "Smallest J")->check(CLI::PositiveNumber);
  sel->add_option("--J-max", j_max, "Largest J")->check(CLI::PositiveNumber);
  sel->add_option("--models", sel_models, "Models to compare")->delimiter(',')->check(CLI::IsMember({"m1", "m2"}));
  sel->add_option("--out", sel_out, "Output directory")->required();
  auto [sel_seed, sel_threads] = add_common(sel);

  // bootstrap
  auto* boot = app.add_subcommand("bootstrap", "Parametric bootstrap standard errors for a fit");
  std::string boot_fit, boot_data, boot_out;
  int B = 200;
  bool resample = false;
  boot->add_option("--fit", boot_fit, "Directory written by `fit`")->required()->check(CLI::ExistingDirectory);
  boot->add_option("--data", boot_data, "Dataset the fit was computed on")->required()->check(CLI::ExistingFile);
  boot->add_option("--B", B, "Bootstrap replicates")->check(CLI::PositiveNumber);
  boot->add_flag("--resample-dropout", resample, "Resample subjects instead of conditioning on dropout times");
  boot->add_option("--out", boot_out, "Output directory")->required();
  auto [boot_seed, boot_threads] = add_common(boot);

  // decode
  auto* dec = app.add_subcommand("decode", "Local decoding, attrition table and average state probabilities");
  std::string dec_fit, dec_data, dec_out;
  dec->add_option("--fit", dec_fit, "Directory written by `fit`")->required()->check(CLI::ExistingDirectory);
  dec->add_option("--data", dec_data, "Dataset to decode")->required()->check(CLI::ExistingFile);
  dec->add_option("--out", dec_out, "Output directory")->required();

  // replicate
  auto* rep = app.add_subcommand("replicate", "Monte Carlo study of beta-hat under M1 and M2");
  std::string rep_scheme = "conditional", rep_out;
  int reps = 50, rep_starts = 5;
  std::optional<int> rep_n, rep_T;
  rep->add_option("--scheme", rep_scheme, "conditional | joint")->check(CLI::IsMember({"conditional", "joint"}));
  rep->add_option("--reps", reps, "Replicates")->check(CLI::Range(2, 1000000));
  rep->add_option("--n", rep_n, "Subjects per replicate")->check(CLI::PositiveNumber);
  rep->add_option("--T", rep_T, "Occasions")->check(CLI::PositiveNumber);
  rep->add_option("--starts", rep_starts, "Random starts per fit")->check(CLI::PositiveNumber);
  rep->add_option("--out", rep_out, "Output directory")->required();
  auto [rep_seed, rep_threads] = add_common(rep);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (*sim) {
      resolve(common, sim_seed, sim_threads);
      lmd_sim_options o;
      check(lmd_sim_options_default(scheme == "joint" ? LMD_SCHEME_JOINT : LMD_SCHEME_CONDITIONAL, &o), "options");
      o.n = sim_n;
      if (sim_T) o.horizon = *sim_T;
      o.seed = common.seed;
      const fs::path dir(sim_out);
      make_dir(dir);
      Data data;
      Truth truth;
      check(lmd_simulate(&o, data.out(), truth.out()), "simulating");
      check(lmd_dataset_write(data.get(), (dir / "data.csv").c_str()), "writing data");
      check(lmd_truth_write(truth.get(), data.get(), (dir / "truth.csv").c_str()), "writing truth");
      check(lmd_dataset_write_dropout_counts(data.get(), (dir / "dropout_counts.csv").c_str()), "writing counts");
      Config cfg;
      check(lmd_sim_config(2, cfg.out()), "config");
      check(lmd_config_write(cfg.get(), (dir / "config.txt").c_str()), "writing config");
      check(lmd_sim_manifest_write(&o, (dir / "manifest.txt").c_str()), "writing manifest");
      std::cout << "simulated " << lmd_dataset_n_subjects(data.get()) << " subjects into " << dir.string() << '\n';
      return kExitOk;
    }

    if (*fit) {
      resolve(common, fit_seed, fit_threads);
      Config cfg;
      load_config(fit_config, fit_J, cfg);
      Data data;
      check(lmd_dataset_load(fit_data.c_str(), cfg.get(), data.out()), "loading data");
      lmd_fit_options o;
      lmd_fit_options_default(&o);
      o.model = model_code(fit_model);
      o.variant = fit_variant == "saturated" ? LMD_VARIANT_SATURATED : LMD_VARIANT_PARAMETRIC;
      if (fit_starts > 0) o.n_short_starts = fit_starts;
      if (fit_long > 0) o.n_long_runs = fit_long;
      if (fit_max_iter > 0) o.max_iter = fit_max_iter;
      o.refine = no_refine ? 0 : 1;
      o.seed = common.seed;
      o.threads = common.threads;
      Fit f;
      check(lmd_fit_run(data.get(), cfg.get(), &o, f.out()), "fitting");
      const fs::path dir(fit_out);
      make_dir(dir);
      check(lmd_fit_write(f.get(), data.get(), dir.c_str()), "writing fit");
      check(lmd_config_write(cfg.get(), (dir / "config.txt").c_str()), "writing config");
      write_manifest(dir, "fit", {{"data", fit_data},
                                  {"model", fit_model},
                                  {"variant", fit_model == "m2" ? "parametric" : fit_variant},
                                  {"n_states", std::to_string(lmd_fit_n_states(f.get()))},
                                  {"seed", std::to_string(common.seed)},
                                  {"threads", std::to_string(common.threads)},
                                  {"starts", std::to_string(o.n_short_starts)},
                                  {"long_runs", std::to_string(o.n_long_runs)},
                                  {"refine", o.refine ? "true" : "false"}});
      const bool ok = lmd_fit_converged(f.get()) != 0;
      std::cout << "loglik " << lmd_fit_loglik(f.get()) << ", " << lmd_fit_n_params(f.get()) << " parameters"
                << (ok ? "" : " (NOT CONVERGED)") << '\n';
      return ok ? kExitOk : kExitNotConverged;
    }

    if (*sel) {
      resolve(common, sel_seed, sel_threads);
      if (j_min > j_max) throw CLI::ValidationError("--J-min", "must not exceed --J-max");
      Config cfg;
      load_config(sel_config, 0, cfg);
      Data data;
      check(lmd_dataset_load(sel_data.c_str(), cfg.get(), data.out()), "loading data");
      const size_t n = lmd_dataset_n_subjects(data.get());
      std::vector<lmd_criteria> rows;
      bool all_converged = true;
      for (const auto& m : sel_models) {
        for (int J = j_min; J <= j_max; ++J) {
          lmd_fit_options o;
          lmd_fit_options_default(&o);
          o.model = model_code(m);
          o.n_states = J;
          o.seed = common.seed;
          o.threads = common.threads;
          Fit f;
          check(lmd_fit_run(data.get(), cfg.get(), &o, f.out()), "fitting " + m + " J=" + std::to_string(J));
          if (!lmd_fit_converged(f.get())) {
            all_converged = false;
            std::cerr << "lmdrop: " << m << " J=" << J << " did not converge\n";
          }
          lmd_criteria c;
          check(lmd_fit_criteria(f.get(), n, &c), "criteria");
          rows.push_back(c);
        }
      }
      const fs::path dir(sel_out);
      make_dir(dir);
      check(lmd_criteria_table_write(rows.data(), rows.size(), (dir / "criteria.csv").c_str()), "writing table");
      std::string models;
      for (const auto& m : sel_models) models += (models.empty() ? "" : ",") + m;
      write_manifest(dir, "select", {{"data", sel_data},
                                     {"models", models},
                                     {"J_min", std::to_string(j_min)},
                                     {"J_max", std::to_string(j_max)},
                                     {"seed", std::to_string(common.seed)},
                                     {"threads", std::to_string(common.threads)}});
      std::ifstream table(dir / "criteria.csv");
      std::cout << table.rdbuf();
      return all_converged ? kExitOk : kExitNotConverged;
    }

    if (*boot) {
      resolve(common, boot_seed, boot_threads);
      Fit f;
      check(lmd_fit_load(boot_fit.c_str(), f.out()), "loading fit");
      if (!lmd_fit_converged(f.get())) {
        std::cerr << "lmdrop: refusing to bootstrap a fit that did not converge\n";
        return kExitBadInput;
      }
      Config cfg;
      const fs::path cfg_path = fs::path(boot_fit) / "config.txt";
      check(lmd_config_load(cfg_path.c_str(), cfg.out()), "loading fit config");
      Data data;
      check(lmd_dataset_load(boot_data.c_str(), cfg.get(), data.out()), "loading data");
      Boot b;
      check(lmd_bootstrap_run(data.get(), f.get(), B, common.seed, common.threads, resample ? 1 : 0, b.out()),
            "bootstrap");
      const fs::path dir(boot_out);
      make_dir(dir);
      check(lmd_bootstrap_write(b.get(), (dir / "bootstrap_se.csv").c_str()), "writing table");
      write_manifest(dir, "bootstrap", {{"fit", boot_fit},
                                        {"data", boot_data},
                                        {"B", std::to_string(B)},
                                        {"resample_dropout", resample ? "true" : "false"},
                                        {"failed", std::to_string(lmd_bootstrap_n_failed(b.get()))},
                                        {"seed", std::to_string(common.seed)},
                                        {"threads", std::to_string(common.threads)}});
      std::cout << B - lmd_bootstrap_n_failed(b.get()) << " of " << B << " replicates succeeded\n";
      return kExitOk;
    }

    if (*dec) {
      Fit f;
      check(lmd_fit_load(dec_fit.c_str(), f.out()), "loading fit");
      Config cfg;
      const fs::path cfg_path = fs::path(dec_fit) / "config.txt";
      check(lmd_config_load(cfg_path.c_str(), cfg.out()), "loading fit config");
      Data data;
      check(lmd_dataset_load(dec_data.c_str(), cfg.get(), data.out()), "loading data");
      const fs::path dir(dec_out);
      make_dir(dir);
      check(lmd_decode_write(f.get(), data.get(), dir.c_str()), "decoding");
      write_manifest(dir, "decode", {{"fit", dec_fit}, {"data", dec_data}});
      return kExitOk;
    }

    if (*rep) {
      resolve(common, rep_seed, rep_threads);
      lmd_sim_options s;
      check(lmd_sim_options_default(rep_scheme == "joint" ? LMD_SCHEME_JOINT : LMD_SCHEME_CONDITIONAL, &s), "options");
      if (rep_n) s.n = *rep_n;
      if (rep_T) s.horizon = *rep_T;
      s.seed = common.seed;
      lmd_fit_options o;
      lmd_fit_options_default(&o);
      o.n_short_starts = rep_starts;
      o.n_long_runs = std::min(o.n_long_runs, rep_starts);
      o.seed = common.seed;
      o.threads = common.threads;  // spent across replicates
      Report r;
      check(lmd_replicate_run(&s, reps, &o, r.out()), "replication study");
      const fs::path dir(rep_out);
      make_dir(dir);
      check(lmd_report_write(r.get(), (dir / "replication.csv").c_str()), "writing report");
      check(lmd_sim_manifest_write(&s, (dir / "scheme.txt").c_str()), "writing scheme");
      write_manifest(dir, "replicate", {{"scheme", rep_scheme},
                                        {"reps", std::to_string(reps)},
                                        {"starts", std::to_string(rep_starts)},
                                        {"seed", std::to_string(common.seed)},
                                        {"threads", std::to_string(common.threads)}});
      std::ifstream table(dir / "replication.csv");
      std::cout << table.rdbuf();
      return lmd_report_valid(r.get()) ? kExitOk : kExitNotConverged;
    }
  } catch (const CommandFailed& e) {
    return e.exit_code;
  } catch (const CLI::ValidationError& e) {
    std::cerr << "lmdrop: " << e.what() << '\n';
    return kExitUsage;
  }
  return kExitUsage;
}
