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

// Command-line front end over the C interface.
//
//   adassl run --config PATH [--set key=value]... [--dotted.key value]...
//   adassl verify [--group G]... [--check NAME]... [--inject FAULT] [--report PATH]
//   adassl table {t1|t2} --scale {desk|paper} [--set key=value]...
//
// Exit codes: 0 success, 1 verification failure, 2 usage/config/I-O error,
// 3 numeric abort.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "adassl/adassl.h"

namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitVerify = 1;
constexpr int kExitUsage = 2;
constexpr int kExitNumeric = 3;

constexpr const char* kOutputRootEnv = "ADASSL_OUTPUT_ROOT";

int exit_code(adassl_status s) {
  switch (s) {
    case ADASSL_OK: return kExitOk;
    case ADASSL_ERR_NUMERIC: return kExitNumeric;
    case ADASSL_ERR_INTERNAL: return kExitVerify;
    default: return kExitUsage;
  }
}

int report(adassl_status s) {
  std::fprintf(stderr, "adassl: %s error: %s\n", adassl_status_name(s), adassl_last_error());
  return exit_code(s);
}

std::string take(char* s) {
  std::string out = s ? s : "";
  adassl_string_free(s);
  return out;
}

using Overrides = std::vector<std::pair<std::string, std::string>>;

bool parse_set(const std::string& kv, Overrides& out) {
  const auto eq = kv.find('=');
  if (eq == std::string::npos || eq == 0) return false;
  out.emplace_back(kv.substr(0, eq), kv.substr(eq + 1));
  return true;
}

// Unrecognised `--dotted.key value` or `--dotted.key=value` arguments.
bool parse_dotted(const std::vector<std::string>& extras, Overrides& out, std::string& bad) {
  for (std::size_t i = 0; i < extras.size(); ++i) {
    const std::string& a = extras[i];
    if (a.rfind("--", 0) != 0 || a.find('.') == std::string::npos) {
      bad = a;
      return false;
    }
    const std::string body = a.substr(2);
    const auto eq = body.find('=');
    if (eq != std::string::npos) {
      out.emplace_back(body.substr(0, eq), body.substr(eq + 1));
    } else if (i + 1 < extras.size()) {
      out.emplace_back(body, extras[++i]);
    } else {
      bad = a + " (missing value)";
      return false;
    }
  }
  return true;
}

std::string timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  localtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y%m%d-%H%M%S", &tm);
  return buf;
}

// <root>/<name>-<timestamp>, suffixed if that directory already exists.
std::string fresh_run_dir(const std::string& root, const std::string& name) {
  const std::string base = (fs::path(root) / (name + "-" + timestamp())).string();
  std::string dir = base;
  for (int i = 1; fs::exists(dir); ++i) dir = base + "-" + std::to_string(i);
  return dir;
}

std::string output_root(const std::string& fallback) {
  const char* env = std::getenv(kOutputRootEnv);
  return env && *env ? env : fallback;
}

int cmd_run(const std::string& config_path, const Overrides& overrides) {
  adassl_config* cfg = nullptr;
  adassl_status s = adassl_config_load(config_path.c_str(), &cfg);
  if (s != ADASSL_OK) {
    report(s);
    return kExitUsage;
  }
  for (const auto& [k, v] : overrides) {
    s = adassl_config_set(cfg, k.c_str(), v.c_str());
    if (s != ADASSL_OK) {
      adassl_config_free(cfg);
      return report(s);
    }
  }
  if ((s = adassl_config_validate(cfg)) != ADASSL_OK) {
    adassl_config_free(cfg);
    return report(s);
  }
  char* json = nullptr;
  adassl_config_to_json(cfg, &json);
  const nlohmann::json resolved = nlohmann::json::parse(take(json));
  const std::string root = output_root(resolved.at("io").at("output_dir").get<std::string>());
  const std::string dir = fresh_run_dir(root, resolved.at("name").get<std::string>());
  std::printf("run directory: %s\n", dir.c_str());
  std::fflush(stdout);

  adassl_run* run = nullptr;
  s = adassl_run_trials(cfg, dir.c_str(), 0, &run);
  adassl_config_free(cfg);
  if (s != ADASSL_OK) return report(s);
  char* csv = nullptr;
  adassl_run_results_csv(run, &csv);
  std::fputs(take(csv).c_str(), stdout);
  const bool complete = adassl_run_complete(run) != 0;
  adassl_run_free(run);
  if (!complete) {
    std::fprintf(stderr, "adassl: numeric abort in at least one trial; see %s/failures.json\n",
                 dir.c_str());
    return kExitNumeric;
  }
  return kExitOk;
}

void print_check(const adassl_check* c, void*) {
  std::printf("%-4s  %-9s %-38s %7.2fs  %s\n", c->passed ? "PASS" : "FAIL", c->group, c->name,
              c->seconds, c->detail);
  std::fflush(stdout);
}

std::string join(const std::vector<std::string>& v) {
  std::string out;
  for (const auto& s : v) out += (out.empty() ? "" : ",") + s;
  return out;
}

int cmd_verify(const std::vector<std::string>& groups, const std::vector<std::string>& checks,
               const std::string& inject, const std::string& report_path) {
  if (!inject.empty()) {
    const adassl_status s = adassl_fault_inject(inject.c_str());
    if (s != ADASSL_OK) return report(s);
  }
  adassl_verify_report* rep = nullptr;
  const adassl_status s =
      adassl_verify(join(groups).c_str(), join(checks).c_str(), print_check, nullptr, &rep);
  adassl_fault_inject("none");
  if (s != ADASSL_OK) return report(s);
  const std::size_t n = adassl_verify_count(rep);
  std::size_t failed = 0;
  for (std::size_t i = 0; i < n; ++i) {
    adassl_check c;
    adassl_verify_check(rep, i, &c);
    if (!c.passed) {
      if (failed++ == 0) std::printf("failing:\n");
      std::printf("  %s/%s: %s\n", c.group, c.name, c.detail);
    }
  }
  std::printf("%zu checks, %zu failed\n", n, failed);
  if (!report_path.empty()) {
    char* json = nullptr;
    adassl_verify_json(rep, &json);
    std::ofstream os(report_path);
    os << take(json);
    if (!os) {
      adassl_verify_free(rep);
      std::fprintf(stderr, "adassl: cannot write report '%s'\n", report_path.c_str());
      return kExitUsage;
    }
  }
  const bool passed = adassl_verify_passed(rep) != 0;
  adassl_verify_free(rep);
  if (n == 0) {
    std::fprintf(stderr, "adassl: no checks matched the filters\n");
    return kExitUsage;
  }
  return passed ? kExitOk : kExitVerify;
}

void print_cell(const char* id, int complete, void*) {
  std::printf("cell %s %s\n", id, complete ? "done" : "INCOMPLETE");
  std::fflush(stdout);
}

int cmd_table(const std::string& table_id, const std::string& scale, const Overrides& overrides) {
  char* cells = nullptr;
  adassl_status s = adassl_table_cells(table_id.c_str(), scale.c_str(), &cells);
  if (s != ADASSL_OK) return report(s);
  adassl_string_free(cells);
  const std::string dir = fresh_run_dir(output_root("runs"), table_id + "-" + scale);
  std::printf("run directory: %s\n", dir.c_str());
  std::fflush(stdout);
  std::vector<const char*> keys, values;
  for (const auto& [k, v] : overrides) {
    keys.push_back(k.c_str());
    values.push_back(v.c_str());
  }
  adassl_table* table = nullptr;
  s = adassl_table_run(table_id.c_str(), scale.c_str(), dir.c_str(), keys.data(), values.data(),
                       keys.size(), print_cell, nullptr, &table);
  if (s != ADASSL_OK) return report(s);
  char* csv = nullptr;
  adassl_table_csv(table, &csv);
  std::fputs(take(csv).c_str(), stdout);
  const bool complete = adassl_table_complete(table) != 0;
  adassl_table_free(table);
  return complete ? kExitOk : kExitNumeric;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"AdaSSL and contrastive baselines on synthetic data-generating processes"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(adassl_version()));
  app.footer(std::string("Output root: $") + kOutputRootEnv +
             " (default: the config's io.output_dir, or ./runs for tables).\n"
             "Exit codes: 0 ok, 1 verification failure, 2 usage/config error, 3 numeric abort.");

  std::string config_path;
  std::vector<std::string> sets;
  auto* run = app.add_subcommand("run", "Train and evaluate the trials of one configuration");
  run->add_option("--config", config_path, "JSON experiment config")->required();
  run->add_option("--set", sets, "Override a config field, e.g. --set train.steps=1000");
  run->allow_extras();
  run->footer("Dotted flags such as `--train.steps 0` are accepted as overrides too.");

  std::vector<std::string> groups, checks;
  std::string inject, report_path;
  auto* verify = app.add_subcommand("verify", "Run the gradient, oracle and training checks");
  verify->add_option("--group", groups, "Restrict to a group (gradient, oracle, training, mutation)");
  verify->add_option("--check", checks, "Restrict to a named check");
  verify->add_option("--inject", inject, "Inject a fault first (softplus_adjoint_sign)");
  verify->add_option("--report", report_path, "Write the JSON report to this path");

  std::string table_id, scale = "desk";
  std::vector<std::string> table_sets;
  auto* table = app.add_subcommand("table", "Run a preset table grid");
  table->add_option("table", table_id, "t1 | t2")->required()->check(CLI::IsMember({"t1", "t2"}));
  table->add_option("--scale", scale, "desk | paper")->check(CLI::IsMember({"desk", "paper"}));
  table->add_option("--set", table_sets, "Override a field in every cell");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*run) {
      Overrides overrides;
      for (const auto& kv : sets) {
        if (!parse_set(kv, overrides)) {
          std::fprintf(stderr, "adassl: --set expects key=value, got '%s'\n", kv.c_str());
          return kExitUsage;
        }
      }
      std::string bad;
      if (!parse_dotted(run->remaining(), overrides, bad)) {
        std::fprintf(stderr, "adassl: unrecognised argument '%s'\n", bad.c_str());
        return kExitUsage;
      }
      return cmd_run(config_path, overrides);
    }
    if (*verify) return cmd_verify(groups, checks, inject, report_path);
    if (*table) {
      Overrides overrides;
      for (const auto& kv : table_sets) {
        if (!parse_set(kv, overrides)) {
          std::fprintf(stderr, "adassl: --set expects key=value, got '%s'\n", kv.c_str());
          return kExitUsage;
        }
      }
      return cmd_table(table_id, scale, overrides);
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "adassl: %s\n", e.what());
    return kExitUsage;
  }
  return kExitUsage;
}
