/* Copyright 2026 The adassl Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

/* C interface to the adassl library.
 *
 * Every fallible call returns an adassl_status; on failure the message is
 * available from adassl_last_error() on the same thread until the next call.
 * Handles are opaque and owned by the caller, who releases them with the
 * matching *_free function. Strings returned through char** out-parameters are
 * released with adassl_string_free; const char* results borrow from their
 * handle and stay valid while it lives.
 */

#ifndef ADASSL_ADASSL_H_
#define ADASSL_ADASSL_H_

#include <stddef.h>

#if defined(_WIN32)
#define ADASSL_API __declspec(dllexport)
#else
#define ADASSL_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum adassl_status {
  ADASSL_OK = 0,
  ADASSL_ERR_INVALID_ARGUMENT = 1, /* null handle or pointer */
  ADASSL_ERR_CONFIG = 2,
  ADASSL_ERR_DIMENSION = 3,
  ADASSL_ERR_DOMAIN = 4,
  ADASSL_ERR_DEGENERATE = 5,
  ADASSL_ERR_NUMERIC = 6,
  ADASSL_ERR_IO = 7,
  ADASSL_ERR_UNDERDETERMINED = 8,
  ADASSL_ERR_INTERNAL = 9
} adassl_status;

typedef struct adassl_config adassl_config;
typedef struct adassl_run adassl_run;
typedef struct adassl_table adassl_table;
typedef struct adassl_verify_report adassl_verify_report;

ADASSL_API const char* adassl_version(void);
ADASSL_API const char* adassl_last_error(void);
ADASSL_API const char* adassl_status_name(adassl_status status);
ADASSL_API void adassl_string_free(char* s);

/* ---- configuration ---------------------------------------------------------------- */

ADASSL_API adassl_status adassl_config_default(adassl_config** out);
ADASSL_API adassl_status adassl_config_load(const char* path, adassl_config** out);
ADASSL_API adassl_status adassl_config_parse(const char* json, adassl_config** out);
/* Dotted path, e.g. "train.steps"; the value is parsed as JSON, falling back
 * to a plain string. */
ADASSL_API adassl_status adassl_config_set(adassl_config* config, const char* path,
                                           const char* value);
/* Resets tau, the symmetric flag and the beta schedule to the defaults of the
 * configured objective and noise regime. */
ADASSL_API adassl_status adassl_config_apply_objective_defaults(adassl_config* config);
ADASSL_API adassl_status adassl_config_validate(const adassl_config* config);
ADASSL_API adassl_status adassl_config_to_json(const adassl_config* config, char** out);
ADASSL_API void adassl_config_free(adassl_config* config);

/* ---- experiments ------------------------------------------------------------------ */

typedef struct adassl_result_row {
  const char* model;
  const char* regime;
  const char* metric;
  double mean;
  double std;
  size_t n_seeds;
} adassl_result_row;

/* Runs config.trials.n_seeds trials and writes artifacts under run_dir. A
 * trial that aborts numerically is recorded rather than returned as an error;
 * see adassl_run_complete. */
ADASSL_API adassl_status adassl_run_trials(const adassl_config* config, const char* run_dir,
                                           int include_identity, adassl_run** out);
ADASSL_API int adassl_run_complete(const adassl_run* run);
ADASSL_API size_t adassl_run_row_count(const adassl_run* run);
ADASSL_API adassl_status adassl_run_row(const adassl_run* run, size_t index,
                                        adassl_result_row* out);
ADASSL_API size_t adassl_run_report_count(const adassl_run* run);
ADASSL_API adassl_status adassl_run_report_json(const adassl_run* run, size_t index, char** out);
ADASSL_API adassl_status adassl_run_results_csv(const adassl_run* run, char** out);
ADASSL_API void adassl_run_free(adassl_run* run);
/* DCI of a trial's saved model.ckpt re-scored under another lasso penalty. */
ADASSL_API adassl_status adassl_checkpoint_dci(const adassl_config* config, size_t trial,
                                               const char* checkpoint_path, double lambda,
                                               double* out);

/* ---- preset tables ---------------------------------------------------------------- */

typedef void (*adassl_cell_callback)(const char* cell_id, int complete, void* user);

/* table_id: "t1" | "t2"; scale: "desk" | "paper". Each cell may be adjusted
 * by the dotted overrides (count pairs in keys/values) before running. */
ADASSL_API adassl_status adassl_table_run(const char* table_id, const char* scale,
                                          const char* run_dir, const char* const* keys,
                                          const char* const* values, size_t count,
                                          adassl_cell_callback on_cell, void* user,
                                          adassl_table** out);
/* Lists the cell ids of a preset without running anything; one per line. */
ADASSL_API adassl_status adassl_table_cells(const char* table_id, const char* scale, char** out);
ADASSL_API int adassl_table_complete(const adassl_table* table);
ADASSL_API adassl_status adassl_table_csv(const adassl_table* table, char** out);
ADASSL_API void adassl_table_free(adassl_table* table);

/* ---- verification ----------------------------------------------------------------- */

typedef struct adassl_check {
  const char* group;
  const char* name;
  int passed;
  const char* detail;
  double seconds;
} adassl_check;

typedef void (*adassl_check_callback)(const adassl_check* check, void* user);

/* groups and names are comma-separated filters; NULL or "" selects all. */
ADASSL_API adassl_status adassl_verify(const char* groups, const char* names,
                                       adassl_check_callback on_check, void* user,
                                       adassl_verify_report** out);
ADASSL_API int adassl_verify_passed(const adassl_verify_report* report);
ADASSL_API size_t adassl_verify_count(const adassl_verify_report* report);
ADASSL_API adassl_status adassl_verify_check(const adassl_verify_report* report, size_t index,
                                             adassl_check* out);
ADASSL_API adassl_status adassl_verify_table(const adassl_verify_report* report, char** out);
ADASSL_API adassl_status adassl_verify_json(const adassl_verify_report* report, char** out);
ADASSL_API void adassl_verify_free(adassl_verify_report* report);

/* "none" | "softplus_adjoint_sign". Process-wide; for exercising the
 * verification suite only. */
ADASSL_API adassl_status adassl_fault_inject(const char* fault);

#ifdef __cplusplus
}
#endif

#endif /* ADASSL_ADASSL_H_ */
