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


#include <cmath>
#include <filesystem>

#include <doctest.h>

#include "adassl/error.hpp"
#include "adassl/models.hpp"

using namespace adassl;

namespace {

ModelBundle bundle_for(Objective o, ModelSpace space = ModelSpace::kHypersphere,
                       std::size_t d_r = 3) {
  ModelConfig mc;
  mc.space = space;
  mc.input_dim = 4;
  mc.width_multiplier = 2;
  mc.head_width = 8;
  mc.d_r = d_r;
  return make_bundle(mc, o, o == Objective::kByol ? BaseLoss::kByol : BaseLoss::kInfoNce,
                     derive_key(21, objective_name(o)));
}

Tensor randn(Shape s, const char* label) { return gaussian_tensor(std::move(s), derive_key(22, label)); }

}  // namespace

TEST_CASE("hypersphere embeddings have an extra dimension and unit norm") {
  ModelBundle b = bundle_for(Objective::kInfoNce);
  CHECK(b.config.embedding_dim() == 5);
  Tape tape;
  Forward fw(b, tape, {false, false, false});
  const Embedding e = encode(fw, randn({6, 4}, "x"));
  CHECK(e.psi.value().cols() == 5);
  for (std::size_t i = 0; i < 6; ++i) {
    double n = 0.0;
    for (std::size_t j = 0; j < 5; ++j) n += std::pow(e.psi.value().at(i, j), 2);
    CHECK(n == doctest::Approx(1.0).epsilon(1e-12));
  }
  ModelBundle u = bundle_for(Objective::kInfoNce, ModelSpace::kUnbounded);
  CHECK(u.config.embedding_dim() == 4);
}

TEST_CASE("similarity of normalised rows with unit weight is 2(a.b - 1)") {
  Tape tape;
  Var a = l2_normalize(tape.constant(randn({4, 3}, "a")));
  Var b = l2_normalize(tape.constant(randn({4, 3}, "b")));
  const Tensor s =
      similarity(SimilarityVariant::kInfoNce, a, b, tape.constant(Tensor(Shape{1, 1}, 1.0))).value();
  const Tensor p = pairwise_similarity(a, b, tape.constant(Tensor(Shape{1, 1}, 1.0))).value();
  for (std::size_t i = 0; i < 4; ++i) {
    double dot = 0.0;
    for (std::size_t j = 0; j < 3; ++j) dot += a.value().at(i, j) * b.value().at(i, j);
    CHECK(s[i] == doctest::Approx(2.0 * (dot - 1.0)).epsilon(1e-12));
    CHECK(p.at(i, i) == doctest::Approx(s[i]).epsilon(1e-12));
  }
}

TEST_CASE("modular editor is the identity at r = 0 and affine in r") {
  ModelBundle b = bundle_for(Objective::kAdasslS);
  Tape tape;
  Forward fw(b, tape, {false, false, false});
  const Tensor f = randn({5, 5}, "f");
  Var fx = tape.constant(f);
  const Tensor t0 = edit(fw, *b.editor, fx, tape.constant(Tensor(Shape{5, 3}, 0.0))).value();
  for (std::size_t i = 0; i < f.size(); ++i) CHECK(t0[i] == f[i]);
  const Tensor r1 = randn({5, 3}, "r1"), r2 = randn({5, 3}, "r2");
  Tensor mixr(Shape{5, 3});
  for (std::size_t i = 0; i < mixr.size(); ++i) mixr[i] = 0.3 * r1[i] + 0.7 * r2[i];
  const Tensor a = edit(fw, *b.editor, fx, tape.constant(r1)).value();
  const Tensor c = edit(fw, *b.editor, fx, tape.constant(r2)).value();
  const Tensor m = edit(fw, *b.editor, fx, tape.constant(mixr)).value();
  for (std::size_t i = 0; i < m.size(); ++i) {
    CHECK(m[i] == doctest::Approx(0.3 * a[i] + 0.7 * c[i]).epsilon(1e-12));
  }
}

TEST_CASE("variational prior mean mode is deterministic; posterior needs the pair") {
  ModelBundle b = bundle_for(Objective::kAdasslV);
  Tape tape;
  Forward fw(b, tape, {false, false, false});
  Var fx = tape.constant(randn({3, 5}, "fx"));
  const auto s1 = sample_r_variational(fw, fx, Var{}, RMode::kPrior, derive_key(1, "a"), true);
  const auto s2 = sample_r_variational(fw, fx, Var{}, RMode::kPrior, derive_key(1, "b"), true);
  for (std::size_t i = 0; i < s1.r.value().size(); ++i) CHECK(s1.r.value()[i] == s2.r.value()[i]);
  CHECK_THROWS_AS(sample_r_variational(fw, fx, Var{}, RMode::kPosterior, derive_key(1, "c")), Error);
}

TEST_CASE("sparse gates are binary in the forward pass") {
  ModelBundle b = bundle_for(Objective::kAdasslS);
  Tape tape;
  Forward fw(b, tape, {true, false, true});
  Var fx = tape.constant(randn({16, 5}, "fx"));
  Var fp = tape.constant(randn({16, 5}, "fp"));
  const SparseSample s = sample_r_sparse(fw, fx, fp, true, derive_key(2, "g"));
  for (double m : s.mask.values()) CHECK((m == 0.0 || m == 1.0));
  for (double p : s.pi.value().values()) {
    CHECK(p > 0.0);
    CHECK(p < 1.0);
  }
}

TEST_CASE("EMA shadow starts equal to the online encoder and moves toward it") {
  ModelBundle b = bundle_for(Objective::kByol);
  REQUIRE(b.uses_ema());
  for (std::size_t k = 0; k < b.encoder_params.size(); ++k) {
    const Tensor& on = b.params[b.encoder_params[k]].value;
    for (std::size_t i = 0; i < on.size(); ++i) CHECK(b.ema_shadow[k][i] == on[i]);
  }
  b.params[b.encoder_params[0]].value[0] += 1.0;
  const double before = b.ema_shadow[0][0];
  ema_update(b, 0.5);
  CHECK(b.ema_shadow[0][0] == doctest::Approx(before + 0.5));
  ema_sync(b);
  CHECK(b.ema_shadow[0][0] == b.params[b.encoder_params[0]].value[0]);
}

TEST_CASE("checkpoints round-trip bit-exactly") {
  ModelBundle a = bundle_for(Objective::kAdasslV);
  ModelBundle b = bundle_for(Objective::kAdasslV);
  for (auto& p : b.params.all()) p.value.fill(0.0);
  const std::string path =
      (std::filesystem::temp_directory_path() / "adassl_test_model.ckpt").string();
  save_checkpoint(a, path);
  load_checkpoint(b, path);
  std::filesystem::remove(path);
  for (std::size_t i = 0; i < a.params.size(); ++i) {
    for (std::size_t j = 0; j < a.params[i].value.size(); ++j) {
      CHECK(a.params[i].value[j] == b.params[i].value[j]);
    }
  }
  ModelBundle other = bundle_for(Objective::kInfoNce);
  save_checkpoint(other, path);
  CHECK_THROWS_AS(load_checkpoint(b, path), Error);
  std::filesystem::remove(path);
}

TEST_CASE("enum names parse back") {
  for (Objective o : {Objective::kInfoNce, Objective::kAnInfoNce, Objective::kHInfoNceAffine,
                      Objective::kHInfoNceMlp, Objective::kByol, Objective::kAdasslV,
                      Objective::kAdasslS}) {
    CHECK(parse_objective(objective_name(o)) == o);
  }
  CHECK_THROWS_AS(parse_objective("simclr"), Error);
}
