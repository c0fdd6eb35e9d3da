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

#include <doctest.h>

#include "adassl/losses.hpp"
#include "adassl/models.hpp"

using namespace adassl;

namespace {

Tensor randn(Shape s, const char* label) { return gaussian_tensor(std::move(s), derive_key(31, label)); }

}  // namespace

TEST_CASE("InfoNCE is bounded below by -log K") {
  for (const char* label : {"s1", "s2", "s3"}) {
    Tape tape;
    Tensor s = randn({6, 6}, label);
    for (std::size_t i = 0; i < 6; ++i) s.at(i, i) += 50.0;  // near-perfect alignment
    const double v = infonce(tape.constant(s), 1.0).value().item();
    CHECK(v >= -std::log(6.0) - 1e-12);
    CHECK(v == doctest::Approx(-std::log(6.0)).epsilon(1e-6));
  }
}

TEST_CASE("symmetric InfoNCE averages both directions") {
  Tape tape;
  const Tensor s = randn({5, 5}, "sym");
  Var sv = tape.constant(s);
  const double fwd = infonce(sv, 0.5).value().item();
  const double bwd = infonce(transpose(sv), 0.5).value().item();
  CHECK(infonce(sv, 0.5, true).value().item() == doctest::Approx(0.5 * (fwd + bwd)).epsilon(1e-14));
}

TEST_CASE("InfoNCE stays finite for extreme similarities") {
  Tape tape;
  Tensor s = randn({4, 4}, "big");
  for (double& v : s.values()) v *= 1e4;
  CHECK(std::isfinite(infonce(tape.constant(s), 0.1).value().item()));
}

TEST_CASE("BYOL loss lies in [0, 4] and is zero for aligned directions") {
  Tape tape;
  const Tensor p = randn({5, 3}, "p");
  Tensor t = p;
  for (double& v : t.values()) v *= 3.0;
  CHECK(byol_loss(tape.constant(p), tape.constant(t)).value().item() ==
        doctest::Approx(0.0).epsilon(1e-12));
  Tensor neg = p;
  for (double& v : neg.values()) v = -v;
  CHECK(byol_loss(tape.constant(p), tape.constant(neg)).value().item() ==
        doctest::Approx(4.0).epsilon(1e-12));
}

TEST_CASE("KL of identical Gaussians is zero and otherwise positive") {
  Tape tape;
  Var m = tape.constant(randn({3, 4}, "m"));
  Var l = tape.constant(randn({3, 4}, "l"));
  for (double v : kl_factorized_gaussians(m, l, m, l).value().values()) CHECK(std::abs(v) < 1e-14);
  Var m2 = tape.constant(randn({3, 4}, "m2"));
  for (double v : kl_factorized_gaussians(m, l, m2, l).value().values()) CHECK(v > 0.0);
}

TEST_CASE("expected L0 is the batch mean of gate sums") {
  Tape tape;
  const double l0 = expected_l0(tape.constant(Tensor::matrix(2, 3, {0.1, 0.2, 0.3, 0.5, 0.5, 0.5})))
                        .value()
                        .item();
  CHECK(l0 == doctest::Approx((0.6 + 1.5) / 2.0));
}

TEST_CASE("beta schedule ramps linearly then holds") {
  const BetaSchedule b{0.0, 0.5, 1000};
  CHECK(b.at(0) == 0.0);
  CHECK(b.at(500) == doctest::Approx(0.25));
  CHECK(b.at(1000) == doctest::Approx(0.5));
  CHECK(b.at(50000) == doctest::Approx(0.5));
  CHECK(BetaSchedule{1.0, 1.0, 0}.at(7) == 1.0);
}
