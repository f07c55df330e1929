/*
 * lmdrop: latent Markov random-effects models for longitudinal binary
 * outcomes with monotone dropout.
 *
 * Plain C interface over the C++ core. Every object is an opaque handle
 * created by a *_load / *_run / *_create call and released by the matching
 * *_free call. Functions returning lmd_status leave a human-readable message
 * retrievable with lmd_last_error() on failure (per thread).
 */
#ifndef LMDROP_LMDROP_H
#define LMDROP_LMDROP_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define LMD_API __declspec(dllexport)
#else
#define LMD_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum lmd_status {
  LMD_OK = 0,
  LMD_ERR_INVALID_ARGUMENT = 1,
  LMD_ERR_IO = 2,
  LMD_ERR_PARSE = 3,
  LMD_ERR_DEGENERATE = 4,
  LMD_ERR_NUMERICAL = 5,
  LMD_ERR_NOT_CONVERGED = 6,
  LMD_ERR_INTERNAL = 7
} lmd_status;

typedef enum lmd_model { LMD_MODEL_M1 = 0, LMD_MODEL_M2 = 1 } lmd_model;
typedef enum lmd_variant { LMD_VARIANT_PARAMETRIC = 0, LMD_VARIANT_SATURATED = 1 } lmd_variant;
typedef enum lmd_scheme { LMD_SCHEME_CONDITIONAL = 0, LMD_SCHEME_JOINT = 1 } lmd_scheme;

typedef struct lmd_config lmd_config;
typedef struct lmd_dataset lmd_dataset;
typedef struct lmd_truth lmd_truth;
typedef struct lmd_fit lmd_fit;
typedef struct lmd_bootstrap lmd_bootstrap;
typedef struct lmd_report lmd_report;

/* EM protocol settings. Fill with lmd_fit_options_default before editing. */
typedef struct lmd_fit_options {
  int model;          /* lmd_model */
  int variant;        /* lmd_variant; ignored for M2 */
  int n_states;       /* <= 0: take n_states from the config */
  int n_short_starts;
  int n_long_runs;
  int max_iter;
  double short_run_threshold;
  double final_tol;
  int refine;         /* non-zero: quasi-Newton refinement after EM */
  uint64_t seed;
  int threads;        /* <= 0: hardware concurrency */
} lmd_fit_options;

/* Two-state generating scheme. Fill with lmd_sim_options_default. */
typedef struct lmd_sim_options {
  int scheme; /* lmd_scheme */
  int n;
  int horizon;
  uint64_t seed;
  double beta;
  double intercepts[2];
  double gamma[2];         /* conditional: (intercept, slope) of state 1 initial logit */
  double phi[2][2];        /* conditional: phi[k] = (intercept, slope) of k -> state 1 logit */
  double initial[2];       /* joint */
  double transition[2][2]; /* joint */
  double dropout_logits[2];/* joint */
} lmd_sim_options;

typedef struct lmd_criteria {
  int model;
  int n_states;
  int k;
  int n;
  double loglik;
  double aic;
  double aic3;
  double aicc; /* valid only when has_aicc != 0 */
  double aicu;
  double bic;
  int has_aicc;
} lmd_criteria;

LMD_API const char* lmd_version(void);
LMD_API const char* lmd_last_error(void);

/* ---- configuration ------------------------------------------------------ */
LMD_API lmd_status lmd_config_create(lmd_config** out);
LMD_API lmd_status lmd_config_load(const char* path, lmd_config** out);
LMD_API lmd_status lmd_config_set(lmd_config* config, const char* key, const char* value);
LMD_API lmd_status lmd_config_write(const lmd_config* config, const char* path);
LMD_API int lmd_config_n_states(const lmd_config* config);
LMD_API void lmd_config_free(lmd_config* config);

/* ---- data --------------------------------------------------------------- */
LMD_API lmd_status lmd_dataset_load(const char* path, const lmd_config* config, lmd_dataset** out);
LMD_API lmd_status lmd_dataset_write(const lmd_dataset* data, const char* path);
LMD_API size_t lmd_dataset_n_subjects(const lmd_dataset* data);
LMD_API int lmd_dataset_horizon(const lmd_dataset* data);
/* counts[t-1] = subjects with dropout time t; len must be >= horizon. */
LMD_API lmd_status lmd_dataset_dropout_counts(const lmd_dataset* data, int* counts, size_t len);
LMD_API lmd_status lmd_dataset_write_dropout_counts(const lmd_dataset* data, const char* path);
LMD_API void lmd_dataset_free(lmd_dataset* data);

/* ---- simulation --------------------------------------------------------- */
LMD_API lmd_status lmd_sim_options_default(int scheme, lmd_sim_options* out);
LMD_API lmd_status lmd_simulate(const lmd_sim_options* options, lmd_dataset** data, lmd_truth** truth);
LMD_API lmd_status lmd_truth_write(const lmd_truth* truth, const lmd_dataset* data, const char* path);
LMD_API lmd_status lmd_sim_manifest_write(const lmd_sim_options* options, const char* path);
/* Config matching simulated data: fixed column x, random intercept. */
LMD_API lmd_status lmd_sim_config(int n_states, lmd_config** out);
LMD_API void lmd_truth_free(lmd_truth* truth);

/* ---- fitting ------------------------------------------------------------ */
LMD_API void lmd_fit_options_default(lmd_fit_options* out);
LMD_API lmd_status lmd_fit_run(const lmd_dataset* data, const lmd_config* config,
                               const lmd_fit_options* options, lmd_fit** out);
/* Writes fit.txt, params.txt, trace.csv, posteriors.csv, decoded.csv, H.txt. */
LMD_API lmd_status lmd_fit_write(const lmd_fit* fit, const lmd_dataset* data, const char* dir);
LMD_API lmd_status lmd_fit_load(const char* dir, lmd_fit** out);
LMD_API int lmd_fit_converged(const lmd_fit* fit);
LMD_API double lmd_fit_loglik(const lmd_fit* fit);
LMD_API int lmd_fit_n_params(const lmd_fit* fit);
LMD_API int lmd_fit_n_states(const lmd_fit* fit);
LMD_API int lmd_fit_model(const lmd_fit* fit);
LMD_API lmd_status lmd_fit_beta(const lmd_fit* fit, double* beta, size_t len);
LMD_API lmd_status lmd_fit_criteria(const lmd_fit* fit, size_t n_subjects, lmd_criteria* out);
LMD_API void lmd_fit_free(lmd_fit* fit);

/* ---- model selection and diagnostics ------------------------------------ */
LMD_API lmd_status lmd_criteria_compute(double loglik, int k, int n, lmd_criteria* out);
LMD_API lmd_status lmd_criteria_table_write(const lmd_criteria* rows, size_t n_rows, const char* path);
/* Recomputes posteriors for data under fit; writes decoded.csv, attrition.csv,
   average_state_probs.csv and H.txt (J >= 2) into dir. */
LMD_API lmd_status lmd_decode_write(const lmd_fit* fit, const lmd_dataset* data, const char* dir);
LMD_API lmd_status lmd_classification_index(const lmd_fit* fit, const lmd_dataset* data, double* out);

/* ---- bootstrap ---------------------------------------------------------- */
LMD_API lmd_status lmd_bootstrap_run(const lmd_dataset* data, const lmd_fit* fit, int B, uint64_t seed,
                                     int threads, int resample_dropout, lmd_bootstrap** out);
LMD_API lmd_status lmd_bootstrap_write(const lmd_bootstrap* result, const char* path);
LMD_API int lmd_bootstrap_n_failed(const lmd_bootstrap* result);
LMD_API size_t lmd_bootstrap_n_params(const lmd_bootstrap* result);
LMD_API lmd_status lmd_bootstrap_se(const lmd_bootstrap* result, double* se, size_t len);
LMD_API void lmd_bootstrap_free(lmd_bootstrap* result);

/* ---- replication study -------------------------------------------------- */
LMD_API lmd_status lmd_replicate_run(const lmd_sim_options* sim, int reps, const lmd_fit_options* fit,
                                     lmd_report** out);
LMD_API lmd_status lmd_report_write(const lmd_report* report, const char* path);
/* model: lmd_model. Fills bias, std. dev. and MSE of beta-hat. */
LMD_API lmd_status lmd_report_summary(const lmd_report* report, int model, double* bias, double* sd,
                                      double* mse, int* failed);
LMD_API int lmd_report_valid(const lmd_report* report);
LMD_API void lmd_report_free(lmd_report* report);

#ifdef __cplusplus
}
#endif

#endif /* LMDROP_LMDROP_H */
