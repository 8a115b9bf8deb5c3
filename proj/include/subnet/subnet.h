/* C interface to the subnet library. All functions return a subnet_status;
 * on failure subnet_last_error() describes the problem (thread-local, valid
 * until the next call on the same thread). Handles are opaque and owned by
 * the caller, who releases them with the matching *_free function. */
#ifndef SUBNET_SUBNET_H
#define SUBNET_SUBNET_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#if defined(SUBNET_BUILDING_LIBRARY)
#define SUBNET_API __declspec(dllexport)
#else
#define SUBNET_API __declspec(dllimport)
#endif
#else
#define SUBNET_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum subnet_status {
  SUBNET_OK = 0,
  SUBNET_ERR_CONTRACT = 1,
  SUBNET_ERR_CONFIG = 2,
  SUBNET_ERR_NUMERIC = 3,
  SUBNET_ERR_IO = 4,
  SUBNET_ERR_PARSE = 5,
  SUBNET_ERR_VERSION = 6,
  SUBNET_ERR_CORRUPT = 7,
  SUBNET_ERR_DEGENERATE = 8,
  SUBNET_ERR_INTERNAL = 9
} subnet_status;

typedef struct subnet_dataset subnet_dataset;
typedef struct subnet_model subnet_model;
typedef struct subnet_report subnet_report;

SUBNET_API const char* subnet_version(void);
SUBNET_API const char* subnet_status_name(subnet_status status);
SUBNET_API const char* subnet_last_error(void);
/* Process exit code for a status: 0 ok, 2 configuration, 3 numeric
 * divergence, 4 input/output (including malformed or corrupt files). */
SUBNET_API int subnet_exit_code(subnet_status status);

/* ---- datasets ---- */
SUBNET_API subnet_status subnet_dataset_load_csv(const char* path, size_t n_u, size_t n_y,
                                                 subnet_dataset** out);
SUBNET_API subnet_status subnet_dataset_save_csv(const subnet_dataset* data, const char* path);
/* variant: "base", "linear-process-noise" or "nonlinear-process-noise". */
SUBNET_API subnet_status subnet_dataset_generate(const char* variant, double sigma_k,
                                                 double sigma_e, size_t samples, uint64_t seed,
                                                 subnet_dataset** out);
/* Train/val/test realisations of the simulated system (10000/3000/10000). */
SUBNET_API subnet_status subnet_dataset_generate_splits(const char* variant, double sigma_k,
                                                        uint64_t seed, subnet_dataset** train,
                                                        subnet_dataset** val,
                                                        subnet_dataset** test);
SUBNET_API size_t subnet_dataset_size(const subnet_dataset* data);
SUBNET_API size_t subnet_dataset_n_u(const subnet_dataset* data);
SUBNET_API size_t subnet_dataset_n_y(const subnet_dataset* data);
/* Copies the N x n_y outputs, row-major, into `out` (capacity `len`). */
SUBNET_API subnet_status subnet_dataset_copy_y(const subnet_dataset* data, double* out,
                                               size_t len);
SUBNET_API void subnet_dataset_free(subnet_dataset* data);

/* ---- models ---- */
SUBNET_API subnet_status subnet_model_load(const char* path, subnet_model** out);
SUBNET_API subnet_status subnet_model_save(const subnet_model* model, const char* path);
SUBNET_API size_t subnet_model_n_x(const subnet_model* model);
/* Free-run simulation; `out` receives N x n_y row-major values in original
 * units, NaN for the first *skip rows. */
SUBNET_API subnet_status subnet_model_simulate(const subnet_model* model,
                                               const subnet_dataset* data, double* out,
                                               size_t len, size_t* skip);
SUBNET_API subnet_status subnet_model_nrms(const subnet_model* model, const subnet_dataset* data,
                                           double* nrms);
/* k-step NRMS for k = 0..k_max; `out` needs k_max + 1 entries. */
SUBNET_API subnet_status subnet_model_kstep_nrms(const subnet_model* model,
                                                 const subnet_dataset* data, size_t k_max,
                                                 double* out);
SUBNET_API void subnet_model_free(subnet_model* model);

/* ---- training ---- */
/* `config_json` uses the run-config schema; only seed, threads, model and
 * train are read. */
SUBNET_API subnet_status subnet_train(const char* config_json, const subnet_dataset* train,
                                      const subnet_dataset* val, subnet_model** model,
                                      subnet_report** report);
SUBNET_API size_t subnet_report_epochs(const subnet_report* report);
SUBNET_API subnet_status subnet_report_epoch(const subnet_report* report, size_t index,
                                             double* train_loss, double* val_metric,
                                             double* wallclock_s);
/* 1-based best epoch, 0 when no epoch ran. */
SUBNET_API size_t subnet_report_best_epoch(const subnet_report* report);
SUBNET_API subnet_status subnet_report_save_csv(const subnet_report* report, const char* path);
SUBNET_API void subnet_report_free(subnet_report* report);

/* ---- analysis ---- */
SUBNET_API subnet_status subnet_g_of_d(size_t d, size_t horizon, size_t m_d, double* out);
SUBNET_API subnet_status subnet_overlap_variance_mc(size_t horizon, size_t samples,
                                                    size_t trials, uint64_t seed, size_t threads,
                                                    double* var_d1, double* var_dT,
                                                    double* analytic_ratio);

/* ---- commands ---- */
typedef void (*subnet_log_fn)(const char* line, void* user);

typedef struct subnet_run_options {
  const char* out_dir; /* default "run" */
  int has_seed;        /* nonzero: `seed` overrides the config */
  uint64_t seed;
  size_t threads; /* 0: take from config */
  int force;      /* overwrite existing outputs */
  int has_k_max;  /* nonzero: `k_max` overrides eval.k_max */
  size_t k_max;
  subnet_log_fn log;
  void* log_user;
} subnet_run_options;

SUBNET_API void subnet_run_options_init(subnet_run_options* options);
/* command: "generate", "train", "eval", "compare" or "analyze". */
SUBNET_API subnet_status subnet_run(const char* command, const char* config_json,
                                    const subnet_run_options* options);
/* Summary text of the last successful subnet_run on this thread. */
SUBNET_API const char* subnet_last_summary(void);

#ifdef __cplusplus
}
#endif

#endif /* SUBNET_SUBNET_H */
