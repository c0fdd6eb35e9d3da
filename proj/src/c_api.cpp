// Copyright 2026 The adassl Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "adassl/adassl.h"

#include <cstdlib>
#include <cstring>
#include <exception>
#include <new>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "adassl/config.hpp"
#include "adassl/error.hpp"
#include "adassl/tables.hpp"
#include "adassl/train_eval.hpp"
#include "adassl/verify.hpp"
#include "adassl/version.hpp"

struct adassl_config {
  adassl::ExperimentConfig cfg;
};

struct adassl_run {
  adassl::TrialSetResult result;
};

struct adassl_table {
  adassl::TableResult result;
};

struct adassl_verify_report {
  adassl::VerifyReport report;
};

namespace {

thread_local std::string g_last_error;

adassl_status status_of(adassl::ErrorKind kind) {
  using adassl::ErrorKind;
  switch (kind) {
    case ErrorKind::kConfig: return ADASSL_ERR_CONFIG;
    case ErrorKind::kDimension: return ADASSL_ERR_DIMENSION;
    case ErrorKind::kDomain: return ADASSL_ERR_DOMAIN;
    case ErrorKind::kDegenerateInput:
    case ErrorKind::kDegenerateBatch: return ADASSL_ERR_DEGENERATE;
    case ErrorKind::kNumeric: return ADASSL_ERR_NUMERIC;
    case ErrorKind::kIo: return ADASSL_ERR_IO;
    case ErrorKind::kUnderdetermined: return ADASSL_ERR_UNDERDETERMINED;
  }
  return ADASSL_ERR_INTERNAL;
}

adassl_status set_error(adassl_status s, const std::string& message) {
  g_last_error = message;
  return s;
}

// Runs `f`, translating exceptions into status codes at the boundary.
template <typename F>
adassl_status guarded(F&& f) {
  try {
    g_last_error.clear();
    f();
    return ADASSL_OK;
  } catch (const adassl::Error& e) {
    return set_error(status_of(e.kind()), e.what());
  } catch (const std::bad_alloc&) {
    return set_error(ADASSL_ERR_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return set_error(ADASSL_ERR_INTERNAL, e.what());
  } catch (...) {
    return set_error(ADASSL_ERR_INTERNAL, "unknown error");
  }
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

std::set<std::string> split_csv(const char* list) {
  std::set<std::string> out;
  if (!list) return out;
  std::stringstream ss(list);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.insert(item);
  }
  return out;
}

#define ADASSL_REQUIRE(cond)                                                 \
  do {                                                                       \
    if (!(cond)) return set_error(ADASSL_ERR_INVALID_ARGUMENT, #cond " is required"); \
  } while (0)

}  // namespace

extern "C" {

const char* adassl_version(void) { return adassl::kVersionString; }

const char* adassl_last_error(void) { return g_last_error.c_str(); }

const char* adassl_status_name(adassl_status status) {
  switch (status) {
    case ADASSL_OK: return "ok";
    case ADASSL_ERR_INVALID_ARGUMENT: return "invalid_argument";
    case ADASSL_ERR_CONFIG: return "config";
    case ADASSL_ERR_DIMENSION: return "dimension";
    case ADASSL_ERR_DOMAIN: return "domain";
    case ADASSL_ERR_DEGENERATE: return "degenerate";
    case ADASSL_ERR_NUMERIC: return "numeric";
    case ADASSL_ERR_IO: return "io";
    case ADASSL_ERR_UNDERDETERMINED: return "underdetermined";
    case ADASSL_ERR_INTERNAL: return "internal";
  }
  return "unknown";
}

void adassl_string_free(char* s) { std::free(s); }

// ---- configuration -------------------------------------------------------------------

adassl_status adassl_config_default(adassl_config** out) {
  ADASSL_REQUIRE(out);
  return guarded([&] { *out = new adassl_config{}; });
}

adassl_status adassl_config_load(const char* path, adassl_config** out) {
  ADASSL_REQUIRE(path && out);
  return guarded([&] { *out = new adassl_config{adassl::load_config(path)}; });
}

adassl_status adassl_config_parse(const char* json, adassl_config** out) {
  ADASSL_REQUIRE(json && out);
  return guarded([&] { *out = new adassl_config{adassl::config_from_json(json)}; });
}

adassl_status adassl_config_set(adassl_config* config, const char* path, const char* value) {
  ADASSL_REQUIRE(config && path && value);
  return guarded([&] { adassl::apply_override(config->cfg, path, value); });
}

adassl_status adassl_config_apply_objective_defaults(adassl_config* config) {
  ADASSL_REQUIRE(config);
  return guarded([&] { config->cfg = adassl::with_objective_defaults(config->cfg); });
}

adassl_status adassl_config_validate(const adassl_config* config) {
  ADASSL_REQUIRE(config);
  return guarded([&] { adassl::validate(config->cfg); });
}

adassl_status adassl_config_to_json(const adassl_config* config, char** out) {
  ADASSL_REQUIRE(config && out);
  return guarded([&] { *out = dup_string(adassl::to_json(config->cfg)); });
}

void adassl_config_free(adassl_config* config) { delete config; }

// ---- experiments ---------------------------------------------------------------------

adassl_status adassl_run_trials(const adassl_config* config, const char* run_dir,
                                int include_identity, adassl_run** out) {
  ADASSL_REQUIRE(config && run_dir && out);
  return guarded([&] {
    auto* run = new adassl_run{};
    try {
      run->result = adassl::run_trials(config->cfg, run_dir, include_identity != 0);
    } catch (...) {
      delete run;
      throw;
    }
    *out = run;
  });
}

int adassl_run_complete(const adassl_run* run) { return run && run->result.complete ? 1 : 0; }

size_t adassl_run_row_count(const adassl_run* run) { return run ? run->result.rows.size() : 0; }

adassl_status adassl_run_row(const adassl_run* run, size_t index, adassl_result_row* out) {
  ADASSL_REQUIRE(run && out);
  if (index >= run->result.rows.size()) {
    return set_error(ADASSL_ERR_INVALID_ARGUMENT, "row index out of range");
  }
  const auto& r = run->result.rows[index];
  *out = {r.model.c_str(), r.regime.c_str(), r.metric.c_str(), r.mean, r.std, r.n_seeds};
  return ADASSL_OK;
}

size_t adassl_run_report_count(const adassl_run* run) {
  return run ? run->result.reports.size() : 0;
}

adassl_status adassl_run_report_json(const adassl_run* run, size_t index, char** out) {
  ADASSL_REQUIRE(run && out);
  if (index >= run->result.reports.size()) {
    return set_error(ADASSL_ERR_INVALID_ARGUMENT, "report index out of range");
  }
  return guarded([&] { *out = dup_string(adassl::report_json(run->result.reports[index])); });
}

adassl_status adassl_run_results_csv(const adassl_run* run, char** out) {
  ADASSL_REQUIRE(run && out);
  return guarded([&] { *out = dup_string(adassl::results_csv(run->result.rows)); });
}

void adassl_run_free(adassl_run* run) { delete run; }

adassl_status adassl_checkpoint_dci(const adassl_config* config, size_t trial,
                                    const char* checkpoint_path, double lambda, double* out) {
  ADASSL_REQUIRE(config && checkpoint_path && out);
  return guarded([&] { *out = adassl::checkpoint_dci(config->cfg, trial, checkpoint_path, lambda); });
}

// ---- preset tables -------------------------------------------------------------------

adassl_status adassl_table_run(const char* table_id, const char* scale, const char* run_dir,
                               const char* const* keys, const char* const* values, size_t count,
                               adassl_cell_callback on_cell, void* user, adassl_table** out) {
  ADASSL_REQUIRE(table_id && scale && run_dir && out);
  ADASSL_REQUIRE(count == 0 || (keys && values));
  return guarded([&] {
    auto cells = adassl::table_preset(table_id, adassl::parse_table_scale(scale));
    for (auto& c : cells) {
      for (size_t i = 0; i < count; ++i) adassl::apply_override(c.config, keys[i], values[i]);
      adassl::validate(c.config);
    }
    adassl::CellCallback cb;
    if (on_cell) {
      cb = [&](const adassl::TableCell& c, const adassl::TrialSetResult& r) {
        on_cell(c.id.c_str(), r.complete ? 1 : 0, user);
      };
    }
    auto* table = new adassl_table{};
    try {
      table->result = adassl::run_table(cells, run_dir, cb);
    } catch (...) {
      delete table;
      throw;
    }
    *out = table;
  });
}

adassl_status adassl_table_cells(const char* table_id, const char* scale, char** out) {
  ADASSL_REQUIRE(table_id && scale && out);
  return guarded([&] {
    std::string text;
    for (const auto& c : adassl::table_preset(table_id, adassl::parse_table_scale(scale))) {
      text += c.id + "\n";
    }
    *out = dup_string(text);
  });
}

int adassl_table_complete(const adassl_table* table) {
  return table && table->result.complete ? 1 : 0;
}

adassl_status adassl_table_csv(const adassl_table* table, char** out) {
  ADASSL_REQUIRE(table && out);
  return guarded([&] { *out = dup_string(adassl::table_csv(table->result)); });
}

void adassl_table_free(adassl_table* table) { delete table; }

// ---- verification --------------------------------------------------------------------

adassl_status adassl_verify(const char* groups, const char* names, adassl_check_callback on_check,
                            void* user, adassl_verify_report** out) {
  ADASSL_REQUIRE(out);
  return guarded([&] {
    adassl::VerifyOptions options;
    options.groups = split_csv(groups);
    options.names = split_csv(names);
    if (on_check) {
      options.on_result = [&](const adassl::CheckResult& r) {
        const adassl_check c{r.group.c_str(), r.name.c_str(), r.passed ? 1 : 0, r.detail.c_str(),
                             r.seconds};
        on_check(&c, user);
      };
    }
    *out = new adassl_verify_report{adassl::run_verify(options)};
  });
}

int adassl_verify_passed(const adassl_verify_report* report) {
  return report && report->report.passed() ? 1 : 0;
}

size_t adassl_verify_count(const adassl_verify_report* report) {
  return report ? report->report.checks.size() : 0;
}

adassl_status adassl_verify_check(const adassl_verify_report* report, size_t index,
                                  adassl_check* out) {
  ADASSL_REQUIRE(report && out);
  if (index >= report->report.checks.size()) {
    return set_error(ADASSL_ERR_INVALID_ARGUMENT, "check index out of range");
  }
  const auto& r = report->report.checks[index];
  *out = {r.group.c_str(), r.name.c_str(), r.passed ? 1 : 0, r.detail.c_str(), r.seconds};
  return ADASSL_OK;
}

adassl_status adassl_verify_table(const adassl_verify_report* report, char** out) {
  ADASSL_REQUIRE(report && out);
  return guarded([&] { *out = dup_string(report->report.table()); });
}

adassl_status adassl_verify_json(const adassl_verify_report* report, char** out) {
  ADASSL_REQUIRE(report && out);
  return guarded([&] { *out = dup_string(report->report.json()); });
}

void adassl_verify_free(adassl_verify_report* report) { delete report; }

adassl_status adassl_fault_inject(const char* fault) {
  ADASSL_REQUIRE(fault);
  const std::string f(fault);
  if (f == "none") {
    adassl::fault::inject(adassl::fault::Fault::kNone);
  } else if (f == "softplus_adjoint_sign") {
    adassl::fault::inject(adassl::fault::Fault::kSoftplusAdjointSign);
  } else {
    return set_error(ADASSL_ERR_CONFIG, "unknown fault '" + f + "'");
  }
  g_last_error.clear();
  return ADASSL_OK;
}

}  // extern "C"
