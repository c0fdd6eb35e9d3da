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


#include <doctest.h>

#include "adassl/config.hpp"
#include "adassl/error.hpp"
#include "adassl/tables.hpp"

using namespace adassl;

TEST_CASE("config serialisation is a fixed point") {
  ExperimentConfig c;
  c.loss.objective = Objective::kAdasslS;
  c.model.d_r = 3;
  c.eval.regimes = {ProbeRegime::kWide};
  c = with_objective_defaults(c);
  const std::string once = to_json(c);
  CHECK(to_json(config_from_json(once)) == once);
}

TEST_CASE("unknown keys and bad values are rejected with the field name") {
  try {
    config_from_json(R"({"train": {"stepz": 10}})");
    FAIL("expected a config error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kConfig);
    CHECK(std::string(e.what()).find("train.stepz") != std::string::npos);
  }
  CHECK_THROWS_AS(config_from_json(R"({"loss": {"objective": "simclr"}})"), Error);
  CHECK_THROWS_AS(config_from_json("[1, 2]"), Error);
  CHECK_THROWS_AS(config_from_json("{not json"), Error);
}

TEST_CASE("dotted overrides parse JSON values") {
  ExperimentConfig c;
  apply_override(c, "train.steps", "0");
  apply_override(c, "loss.objective", "adassl_v");
  apply_override(c, "loss.tau", "0.25");
  CHECK(c.train.steps == 0);
  CHECK(c.loss.objective == Objective::kAdasslV);
  CHECK(c.loss.tau == 0.25);
  CHECK_THROWS_AS(apply_override(c, "train.nope", "1"), Error);
  CHECK_THROWS_AS(apply_override(c, "train.steps", "\"many\""), Error);
}

TEST_CASE("cross-field validation") {
  ExperimentConfig c;
  c.model.editor = "modular";
  CHECK_THROWS_AS(validate(c), Error);  // editor only applies to AdaSSL
  c.loss.objective = Objective::kAdasslS;
  CHECK_NOTHROW(validate(c));
  ExperimentConfig b;
  b.loss.objective = Objective::kByol;
  CHECK_THROWS_AS(validate(b), Error);
  b.loss.base = BaseLoss::kByol;
  CHECK_NOTHROW(validate(b));
}

TEST_CASE("objective defaults") {
  ExperimentConfig c;
  c.dgp.regime = NoiseRegime::kComplex;
  c.loss.objective = Objective::kAdasslV;
  c = with_objective_defaults(c);
  CHECK(c.loss.tau == 0.1);
  CHECK(c.loss.symmetric);
  CHECK(c.loss.beta.end == 0.5);
  c.dgp.regime = NoiseRegime::kHeteroscedastic;
  c.loss.objective = Objective::kInfoNce;
  c = with_objective_defaults(c);
  CHECK(c.loss.tau == 1.0);
  CHECK(!c.loss.symmetric);
}

TEST_CASE("table presets") {
  const auto t2 = table_preset("t2", TableScale::kDesk);
  REQUIRE(t2.size() == 5);
  const char* labels[] = {"InfoNCE", "AnInfoNCE", "H-InfoNCE_MLP", "AdaSSL-V", "AdaSSL-S"};
  for (std::size_t i = 0; i < 5; ++i) {
    CHECK(t2[i].label == labels[i]);
    CHECK(t2[i].config.dgp.regime == NoiseRegime::kComplex);
    CHECK(t2[i].config.model.space == ModelSpace::kHypersphere);
    CHECK(t2[i].config.eval.regimes.size() == 3);
    CHECK(t2[i].config.train.steps == 20000);
    CHECK_NOTHROW(validate(t2[i].config));
  }
  CHECK(t2[2].config.model.hinfonce_predictor);
  const auto t1 = table_preset("t1", TableScale::kPaper);
  CHECK(t1.front().identity);
  CHECK(t1.front().label == "Identity");
  CHECK(t1.size() == 1 + 2 * 10);
  for (const auto& c : t1) {
    CHECK(c.config.train.steps == 200000);
    CHECK(!c.config.model.hinfonce_predictor);
    CHECK_NOTHROW(validate(c.config));
  }
  CHECK_THROWS_AS(table_preset("t3", TableScale::kDesk), Error);
  CHECK_THROWS_AS(parse_table_scale("huge"), Error);
}
