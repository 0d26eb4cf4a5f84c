/* C interface to the cooperative-prediction engine.
 *
 * Every function returns a coop_status. On failure the message for the
 * calling thread is available from coop_last_error() until the next call.
 * Strings returned through char** are heap-allocated and released with
 * coop_string_free(). Handles are released with their *_free function;
 * passing NULL to a *_free function is a no-op.
 *
 * Category values, labels and concept orderings are 1-based in every file
 * and JSON document. */
#ifndef COOP_COOP_H
#define COOP_COOP_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define COOP_API __declspec(dllexport)
#else
#define COOP_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum coop_status {
  COOP_OK = 0,
  COOP_PARSE_ERROR,
  COOP_SCHEMA_ERROR,
  COOP_CONFIG_ERROR,
  COOP_MISSING_DIFFICULTY_ERROR,
  COOP_DEGENERATE_DATA_ERROR,
  COOP_ARITY_ERROR,
  COOP_DIMENSION_ERROR,
  COOP_EMPTY_INPUT_ERROR,
  COOP_AUC_UNDEFINED_ERROR,
  COOP_ALREADY_REVEALED_ERROR,
  COOP_NOTHING_TO_SELECT_ERROR,
  COOP_METRIC_MISMATCH_ERROR,
  COOP_EMPTY_GRID_ERROR,
  COOP_FRACTION_ERROR,
  COOP_UNKNOWN_POLICY_ERROR,
  COOP_UNKNOWN_INSTANCE_ERROR,
  COOP_UNKNOWN_SESSION_ERROR,
  COOP_UNKNOWN_COST_MODEL_ERROR,
  COOP_BAD_BUDGET_ERROR,
  COOP_WRONG_CONCEPT_ERROR,
  COOP_SESSION_FINISHED_ERROR,
  COOP_BAD_REQUEST_ERROR,
  COOP_FLAG_ERROR,
  COOP_ARTIFACT_MISSING_ERROR,
  COOP_HASH_MISMATCH_ERROR,
  COOP_IO_ERROR,
  COOP_INTERNAL_ERROR,
  COOP_NULL_ARGUMENT
} coop_status;

typedef struct coop_space coop_space;
typedef struct coop_dataset coop_dataset;
typedef struct coop_model coop_model;
typedef struct coop_calibration coop_calibration;
typedef struct coop_costs coop_costs;
typedef struct coop_greedy coop_greedy;
typedef struct coop_policy_config coop_policy_config;
typedef struct coop_server coop_server;

COOP_API const char* coop_version(void);
COOP_API const char* coop_last_error(void);
/* Error category name, e.g. "SchemaError". */
COOP_API const char* coop_status_name(coop_status status);
COOP_API void coop_string_free(char* s);

COOP_API coop_status coop_sha256_file(const char* path, char** hex);

/* ---- concept space ---------------------------------------------------- */

COOP_API coop_status coop_space_load(const char* path, coop_space** out);
COOP_API coop_status coop_space_save(const coop_space* space, const char* path);
COOP_API coop_status coop_space_concept_count(const coop_space* space, size_t* out);
COOP_API coop_status coop_space_label_count(const coop_space* space, size_t* out);
COOP_API void coop_space_free(coop_space* space);

/* ---- datasets --------------------------------------------------------- */

/* Synthetic task from a JSON config; NULL or "" gives the reference task.
 * Any of the outputs may be NULL. */
COOP_API coop_status coop_generate(const char* config_json, coop_space** space, coop_dataset** train,
                                   coop_dataset** val, coop_dataset** test);
/* Fills in defaults and validates; writes the full config as JSON. */
COOP_API coop_status coop_synthetic_config(const char* config_json, char** resolved_json);
/* split: "train", "val" or "test". */
COOP_API coop_status coop_dataset_load(const char* path, const coop_space* space, const char* split,
                                       coop_dataset** out);
COOP_API coop_status coop_dataset_save(const coop_dataset* dataset, const char* path);
COOP_API coop_status coop_dataset_size(const coop_dataset* dataset, size_t* out);
COOP_API coop_status coop_dataset_subsample(const coop_dataset* dataset, double fraction, uint64_t seed,
                                            coop_dataset** out);
COOP_API void coop_dataset_free(coop_dataset* dataset);

/* ---- concept-to-label model ------------------------------------------- */

/* config_json: {lr, epochs, batch_size, weight_decay, seed, architecture,
 * hidden_dim}; missing keys take defaults. degenerate may be NULL. */
COOP_API coop_status coop_model_train(const coop_dataset* train, const char* config_json, coop_model** out,
                                      int* degenerate);
COOP_API coop_status coop_train_config(const char* config_json, char** resolved_json);
COOP_API coop_status coop_model_load(const char* path, coop_model** out);
COOP_API coop_status coop_model_save(const coop_model* model, const char* path);
/* Label distribution for a feature vector of length input_dim. */
COOP_API coop_status coop_model_predict(const coop_model* model, const double* features, size_t n_features,
                                        double* out, size_t n_labels);
/* Accuracy of the no-intervention predictions on a dataset. */
COOP_API coop_status coop_model_accuracy(const coop_model* model, const coop_dataset* dataset,
                                         const coop_calibration* calibration, double* out);
COOP_API void coop_model_free(coop_model* model);

/* ---- calibration ------------------------------------------------------ */

COOP_API coop_status coop_calibration_fit(const coop_dataset* dataset, coop_calibration** out);
COOP_API coop_status coop_calibration_load(const char* path, coop_calibration** out);
COOP_API coop_status coop_calibration_save(const coop_calibration* calibration, const char* path);
COOP_API coop_status coop_calibration_apply(const coop_calibration* calibration, double p, double* out);
/* ECE of the pooled concept probabilities, optionally after calibration. */
COOP_API coop_status coop_ece(const coop_dataset* dataset, const coop_calibration* calibration, size_t bins,
                              double* out);
COOP_API void coop_calibration_free(coop_calibration* calibration);

/* ---- costs ------------------------------------------------------------ */

/* spec: "unit", "random:SEED", "systematic:FILE" or "file:FILE". */
COOP_API coop_status coop_costs_make(const char* spec, const coop_space* space, coop_costs** out);
COOP_API coop_status coop_costs_total(const coop_costs* costs, double* out);
/* {"kind": ..., "costs": {concept: cost}} */
COOP_API coop_status coop_costs_json(const coop_costs* costs, const coop_space* space, char** out);
COOP_API void coop_costs_free(coop_costs* costs);

/* ---- baselines and tuning --------------------------------------------- */

/* metric: "accuracy", "auc" or "true_label_prob". */
COOP_API coop_status coop_greedy_fit(const coop_dataset* val, const coop_model* model,
                                     const coop_calibration* calibration, const char* metric, coop_greedy** out);
COOP_API coop_status coop_greedy_load(const char* path, const coop_space* space, coop_greedy** out);
COOP_API coop_status coop_greedy_save(const coop_greedy* order, const char* path);
COOP_API void coop_greedy_free(coop_greedy* order);

/* options_json: {alpha_grid, beta_grid, gamma_grid, two_parameter,
 * fixed_budget, budget_grid, metric}; NULL for defaults. table_json may be
 * NULL; it receives {"rows": [...], "best_row": n}. */
COOP_API coop_status coop_tune(const coop_dataset* val, const coop_model* model, const coop_calibration* calibration,
                               const coop_costs* costs, const char* options_json, coop_policy_config** out,
                               char** table_json);
COOP_API coop_status coop_policy_config_load(const char* path, coop_policy_config** out);
COOP_API coop_status coop_policy_config_save(const coop_policy_config* config, const char* path);
COOP_API coop_status coop_policy_config_json(const coop_policy_config* config, char** out);
COOP_API void coop_policy_config_free(coop_policy_config* config);

/* ---- evaluation ------------------------------------------------------- */

/* Runs one policy over a dataset and returns the curve as JSON
 * {policy, axis, metric, grid, values, stderrs, seeds, area}.
 * policy: coop | cpu-only | cis-only | greedy | random | skyline; config is
 * required for the first three and order for greedy.
 * axis: "steps" or "cost". grid may be NULL (n_grid 0) for the default grid
 * of the axis. metric: "accuracy" or "auc". */
COOP_API coop_status coop_evaluate(const char* policy, const coop_policy_config* config, const coop_greedy* order,
                                   const coop_dataset* dataset, const coop_model* model,
                                   const coop_calibration* calibration, const coop_costs* costs, const char* axis,
                                   const double* grid, size_t n_grid, const uint64_t* seeds, size_t n_seeds,
                                   const char* metric, char** curve_json);
/* JSON array of curves -> CSV policy,axis_kind,grid_point,metric,stderr,n_seeds */
COOP_API coop_status coop_curves_csv(const char* curves_json, char** csv);
COOP_API coop_status coop_area_under_curve(const double* grid, const double* values, size_t n, double* out);
/* JSON array of {fraction, val_size, coop_area, greedy_area, coop_config}. */
COOP_API coop_status coop_data_efficiency(const double* fractions, size_t n_fractions, const coop_dataset* val,
                                          const coop_dataset* test, const coop_model* model,
                                          const coop_calibration* calibration, const char* options_json,
                                          uint64_t seed, char** table_json);

/* ---- session service -------------------------------------------------- */

/* log_dir and static_dir may be NULL. */
COOP_API coop_status coop_server_create(const char* artifact_dir, const char* log_dir, const char* static_dir,
                                        coop_server** out);
/* port 0 picks a free port; the bound port is written to bound_port. */
COOP_API coop_status coop_server_bind(coop_server* server, const char* host, int port, int* bound_port);
/* Blocks serving requests until coop_server_stop. */
COOP_API coop_status coop_server_listen(coop_server* server);
COOP_API coop_status coop_server_stop(coop_server* server);
COOP_API void coop_server_free(coop_server* server);

#ifdef __cplusplus
}
#endif

#endif
