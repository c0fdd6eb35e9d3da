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


#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <utility>

#include <doctest.h>

#include "adassl/adassl.h"

namespace fs = std::filesystem;

namespace {

const std::string kCli = ADASSL_CLI_PATH;
const std::string kConfig = std::string(ADASSL_CONFIG_DIR) + "/hetero_infonce_desk.json";
const std::string kFast =
    " --set dgp.mixing_candidates=20 --set eval.probe_train=500 --set eval.probe_test=500"
    " --set eval.dci_samples=200 --set eval.hetero_samples=10 --set trials.n_seeds=2";

std::string slurp(const fs::path& p) {
  std::ifstream is(p);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) {
    path = fs::temp_directory_path() / ("adassl_test_" + name);
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

// Runs the CLI with its output root set to `root`; returns the exit code.
int cli(const std::string& args, const fs::path& root, const fs::path& log) {
  const std::string cmd = "cd '" + root.string() + "' && ADASSL_OUTPUT_ROOT='" + root.string() +
                          "' '" + kCli + "' " + args + " > '" + log.string() + "' 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::size_t count_entries(const fs::path& dir) {
  std::size_t n = 0;
  for (auto it = fs::recursive_directory_iterator(dir); it != fs::recursive_directory_iterator();
       ++it) {
    ++n;
  }
  return n;
}

fs::path only_run_dir(const fs::path& root) {
  fs::path found;
  for (const auto& e : fs::directory_iterator(root)) {
    if (e.is_directory()) found = e.path();
  }
  return found;
}

}  // namespace

TEST_CASE("version and status names") {
  CHECK(std::string(adassl_version()).size() > 0);
  CHECK(std::string(adassl_status_name(ADASSL_ERR_NUMERIC)) == "numeric");
}

TEST_CASE("config errors surface through status codes and the last-error text") {
  adassl_config* cfg = nullptr;
  CHECK(adassl_config_parse(R"({"train": {"stepz": 1}})", &cfg) == ADASSL_ERR_CONFIG);
  CHECK(cfg == nullptr);
  CHECK(std::string(adassl_last_error()).find("train.stepz") != std::string::npos);
  CHECK(adassl_config_parse(nullptr, &cfg) == ADASSL_ERR_INVALID_ARGUMENT);
  CHECK(adassl_config_load("/nonexistent.json", &cfg) == ADASSL_ERR_IO);
  CHECK(std::string(adassl_last_error()).find("/nonexistent.json") != std::string::npos);

  REQUIRE(adassl_config_default(&cfg) == ADASSL_OK);
  CHECK(adassl_config_set(cfg, "train.steps", "7") == ADASSL_OK);
  CHECK(std::string(adassl_last_error()).empty());
  CHECK(adassl_config_set(cfg, "train.steps", "-1") == ADASSL_ERR_CONFIG);
  char* json = nullptr;
  REQUIRE(adassl_config_to_json(cfg, &json) == ADASSL_OK);
  adassl_config* again = nullptr;
  REQUIRE(adassl_config_parse(json, &again) == ADASSL_OK);
  char* json2 = nullptr;
  adassl_config_to_json(again, &json2);
  CHECK(std::string(json) == std::string(json2));
  CHECK(std::string(json).find("\"steps\": 7") != std::string::npos);
  adassl_string_free(json);
  adassl_string_free(json2);
  adassl_config_free(again);
  adassl_config_free(cfg);
}

TEST_CASE("verify through the C interface, with and without the injected fault") {
  adassl_verify_report* rep = nullptr;
  REQUIRE(adassl_verify("gradient", "softplus,matmul", nullptr, nullptr, &rep) == ADASSL_OK);
  CHECK(adassl_verify_count(rep) == 2);
  CHECK(adassl_verify_passed(rep));
  adassl_verify_free(rep);

  REQUIRE(adassl_fault_inject("softplus_adjoint_sign") == ADASSL_OK);
  REQUIRE(adassl_verify("gradient", "softplus,matmul", nullptr, nullptr, &rep) == ADASSL_OK);
  adassl_fault_inject("none");
  CHECK(!adassl_verify_passed(rep));
  for (size_t i = 0; i < adassl_verify_count(rep); ++i) {
    adassl_check c;
    adassl_verify_check(rep, i, &c);
    CHECK(c.passed == (std::string(c.name) != "softplus"));
  }
  adassl_verify_free(rep);
  CHECK(adassl_fault_inject("bitflip") == ADASSL_ERR_CONFIG);
}

TEST_CASE("CLI usage errors exit with 2 and name the problem") {
  TempDir root("usage");
  const fs::path log = root.path / "log.txt";
  CHECK(cli("run --config /nonexistent/cfg.json", root.path, log) == 2);
  CHECK(slurp(log).find("/nonexistent/cfg.json") != std::string::npos);
  CHECK(cli("run --config '" + kConfig + "' --set train.stepz=3", root.path, log) == 2);
  CHECK(slurp(log).find("train.stepz") != std::string::npos);
  CHECK(cli("run --config '" + kConfig + "' --set model.editor=modular", root.path, log) == 2);
  CHECK(slurp(log).find("model.editor") != std::string::npos);
  CHECK(cli("frobnicate", root.path, log) == 2);
  CHECK(cli("table t3 --scale desk", root.path, log) == 2);
  CHECK(cli("verify --check no_such_check", root.path, log) == 2);
}

TEST_CASE("CLI smoke run with zero steps is reproducible byte for byte") {
  TempDir a("smoke_a"), b("smoke_b");
  const std::string args = "run --config '" + kConfig + "' --train.steps 0" + kFast;
  REQUIRE(cli(args, a.path, a.path / "log.txt") == 0);
  REQUIRE(cli(args, b.path, b.path / "log.txt") == 0);
  const fs::path ra = only_run_dir(a.path), rb = only_run_dir(b.path);
  REQUIRE(fs::exists(ra / "results.csv"));
  const std::string csv = slurp(ra / "results.csv");
  CHECK(csv.find("infonce,pz,r2,") != std::string::npos);
  CHECK(csv.find("infonce,wide_ood,r2,") != std::string::npos);
  CHECK(csv == slurp(rb / "results.csv"));
  for (const char* f : {"config.json", "VERSION", "trial_0/report.json", "trial_0/log.jsonl",
                        "trial_1/model.ckpt"}) {
    CHECK_MESSAGE(fs::exists(ra / f), f);
  }
  CHECK(slurp(ra / "VERSION") == std::string(adassl_version()) + "\n");
  // The echoed config reproduces the run on its own.
  TempDir c("smoke_c");
  REQUIRE(cli("run --config '" + (ra / "config.json").string() + "'", c.path, c.path / "log.txt") ==
          0);
  CHECK(slurp(only_run_dir(c.path) / "results.csv") == csv);
}

TEST_CASE("CLI reports a numeric abort with exit 3 and keeps partial results") {
  TempDir root("abort");
  const std::string args = "run --config '" + kConfig +
                           "' --train.steps 50 --train.batch 32 --set train.lr=1e300" + kFast;
  CHECK(cli(args, root.path, root.path / "log.txt") == 3);
  const fs::path run = only_run_dir(root.path);
  CHECK(fs::exists(run / "failures.json"));
  CHECK(fs::exists(run / "results.csv"));
  CHECK(fs::exists(run / "trial_0" / "last_good.ckpt"));
}

TEST_CASE("CLI verify exits 0 when clean, 1 under the injected fault, and writes nothing") {
  TempDir root("verify");
  const fs::path log = root.path / "log.txt";
  CHECK(cli("verify --group gradient --check softplus --check matmul", root.path, log) == 0);
  CHECK(count_entries(root.path) == 1);  // just the captured log
  CHECK(cli("verify --group gradient --check softplus --inject softplus_adjoint_sign", root.path,
            log) == 1);
  CHECK(slurp(log).find("gradient/softplus") != std::string::npos);
  CHECK(cli("verify --group mutation --report '" + (root.path / "r.json").string() + "'",
            root.path, log) == 0);
  CHECK(slurp(root.path / "r.json").find("\"passed\": true") != std::string::npos);
}

TEST_CASE("checkpoint DCI re-scoring reproduces the reported value at the configured penalty") {
  TempDir root("dci");
  adassl_config* cfg = nullptr;
  REQUIRE(adassl_config_load(kConfig.c_str(), &cfg) == ADASSL_OK);
  for (const auto& [k, v] : {std::pair{"train.steps", "20"}, {"train.batch", "32"},
                             {"trials.n_seeds", "1"}, {"dgp.mixing_candidates", "20"},
                             {"eval.probe_train", "500"}, {"eval.probe_test", "500"},
                             {"eval.dci_samples", "300"}, {"eval.hetero_samples", "10"}}) {
    REQUIRE(adassl_config_set(cfg, k, v) == ADASSL_OK);
  }
  adassl_run* run = nullptr;
  REQUIRE(adassl_run_trials(cfg, root.path.c_str(), 0, &run) == ADASSL_OK);
  REQUIRE(adassl_run_complete(run));
  char* json = nullptr;
  REQUIRE(adassl_run_report_json(run, 0, &json) == ADASSL_OK);
  const std::string report = json;
  adassl_string_free(json);
  const auto at = report.find("\"dci\":");
  REQUIRE(at != std::string::npos);
  const double reported = std::strtod(report.c_str() + at + 6, nullptr);

  const std::string ckpt = (root.path / "trial_0" / "model.ckpt").string();
  double dci = -1.0;
  REQUIRE(adassl_checkpoint_dci(cfg, 0, ckpt.c_str(), 0.01, &dci) == ADASSL_OK);
  CHECK(dci == doctest::Approx(reported).epsilon(1e-9));
  for (double lambda : {0.001, 0.1}) {
    REQUIRE(adassl_checkpoint_dci(cfg, 0, ckpt.c_str(), lambda, &dci) == ADASSL_OK);
    CHECK(dci >= 0.0);
    CHECK(dci <= 1.0);
  }
  CHECK(adassl_checkpoint_dci(cfg, 0, ckpt.c_str(), 0.0, &dci) == ADASSL_ERR_DOMAIN);
  CHECK(adassl_checkpoint_dci(cfg, 0, "/nonexistent/model.ckpt", 0.01, &dci) != ADASSL_OK);
  adassl_run_free(run);
  adassl_config_free(cfg);
}
