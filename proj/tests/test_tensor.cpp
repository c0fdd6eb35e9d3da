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
#include <cstdint>

#include <doctest.h>

#include "adassl/error.hpp"
#include "adassl/gradcheck.hpp"
#include "adassl/models.hpp"
#include "adassl/rng.hpp"
#include "adassl/tensor.hpp"

using namespace adassl;

namespace {

Tensor randn(Shape s, const char* label) { return gaussian_tensor(std::move(s), derive_key(7, label)); }

double max_abs(const Tensor& t) {
  double m = 0.0;
  for (double v : t.values()) m = std::max(m, std::abs(v));
  return m;
}

}  // namespace

TEST_CASE("matmul gradient matches central differences") {
  const auto r = check_function(
      [](const std::vector<Var>& v) {
        Var y = matmul(v[0], v[1]);
        return sum(mul(y, y));
      },
      {randn({5, 4}, "a"), randn({4, 3}, "b")});
  CHECK(r.max_rel_error() < 1e-6);
}

TEST_CASE("softplus uses the stable branch") {
  CHECK(softplus_value(50.0) == doctest::Approx(50.0).epsilon(1e-15));
  CHECK(softplus_value(1000.0) == 1000.0);
  CHECK(softplus_value(-1000.0) >= 0.0);
  CHECK(softplus_value(-1000.0) < 1e-300);
  CHECK(softplus_value(0.0) == doctest::Approx(std::log(2.0)));
  CHECK(std::isfinite(softplus_value(-745.0)));
}

TEST_CASE("l2_normalize gives unit rows and a tangent gradient") {
  Tape tape;
  const Tensor x0 = randn({6, 5}, "l2");
  Var x = tape.leaf(x0);
  Var y = l2_normalize(x);
  for (std::size_t i = 0; i < 6; ++i) {
    double n = 0.0;
    for (std::size_t j = 0; j < 5; ++j) n += y.value().at(i, j) * y.value().at(i, j);
    CHECK(n == doctest::Approx(1.0).epsilon(1e-14));
  }
  tape.backward(sum(mul(y, tape.constant(randn({6, 5}, "w")))));
  // Scaling x leaves y unchanged, so the gradient has no radial component.
  const Tensor g = x.grad();
  for (std::size_t i = 0; i < 6; ++i) {
    double radial = 0.0;
    for (std::size_t j = 0; j < 5; ++j) radial += g.at(i, j) * x0.at(i, j);
    CHECK(std::abs(radial) < 1e-12);
  }
}

TEST_CASE("batch norm standardises columns in training and uses running stats in eval") {
  Tape tape;
  BatchNormState state = BatchNormState::make(3);
  Tensor x0 = randn({64, 3}, "bn");
  for (std::size_t i = 0; i < 64; ++i) x0.at(i, 1) = 3.0 * x0.at(i, 1) + 2.0;
  Var g = tape.constant(Tensor(Shape{1, 3}, 1.0));
  Var b = tape.constant(Tensor(Shape{1, 3}, 0.0));
  Var y = batch_norm(tape.constant(x0), g, b, state, {true, true});
  for (std::size_t j = 0; j < 3; ++j) {
    double m = 0.0, v = 0.0;
    for (std::size_t i = 0; i < 64; ++i) m += y.value().at(i, j);
    m /= 64;
    for (std::size_t i = 0; i < 64; ++i) v += (y.value().at(i, j) - m) * (y.value().at(i, j) - m);
    v /= 64;
    CHECK(std::abs(m) < 1e-12);
    CHECK(v == doctest::Approx(1.0).epsilon(1e-3));
  }
  CHECK(state.running_mean[1] != 0.0);
  const Tensor before = state.running_mean;
  Var e = batch_norm(tape.constant(x0), g, b, state, {false, false});
  CHECK(state.running_mean[1] == before[1]);
  const double expected = (x0.at(0, 1) - state.running_mean[1]) /
                          std::sqrt(state.running_var[1] + state.epsilon);
  CHECK(e.value().at(0, 1) == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("shape and domain violations throw typed errors") {
  Tape tape;
  Var a = tape.constant(Tensor(Shape{2, 3}, 1.0));
  Var b = tape.constant(Tensor(Shape{3, 2}, 1.0));
  CHECK_THROWS_AS(add(a, b), Error);
  try {
    matmul(a, a);
    FAIL("expected a dimension error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kDimension);
  }
  try {
    log(tape.constant(Tensor(Shape{1, 2}, -1.0)));
    FAIL("expected a domain error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kDomain);
  }
}

TEST_CASE("broadcasting along either axis") {
  Tape tape;
  Var a = tape.constant(Tensor::matrix(2, 2, {1, 2, 3, 4}));
  Var row = tape.constant(Tensor::matrix(1, 2, {10, 20}));
  Var col = tape.constant(Tensor::matrix(2, 1, {100, 200}));
  const Tensor r = add(add(a, row), col).value();
  CHECK(r.at(0, 0) == 111);
  CHECK(r.at(1, 1) == 224);
}

TEST_CASE("straight-through and detach route gradients as documented") {
  Tape tape;
  Var relaxed = tape.leaf(Tensor::matrix(1, 3, {0.2, 0.7, 0.9}));
  Var st = straight_through(Tensor::matrix(1, 3, {0, 1, 1}), relaxed);
  CHECK(st.value()[0] == 0.0);
  CHECK(st.value()[1] == 1.0);
  Var x = tape.leaf(Tensor::matrix(1, 3, {1, 2, 3}));
  tape.backward(sum(add(mul(st, x), detach(x))));
  CHECK(relaxed.grad()[2] == 3.0);  // d/drelaxed of st * x
  CHECK(x.grad()[0] == 0.0);        // the detached path contributes nothing
  CHECK(x.grad()[1] == 1.0);
}

TEST_CASE("float32 tapes round values to single precision") {
  Tape tape(Precision::kFloat32);
  Var x = tape.constant(Tensor::matrix(1, 1, {1.0 / 3.0}));
  Var y = scale(x, 1.0);
  CHECK(y.value()[0] == static_cast<double>(static_cast<float>(1.0 / 3.0)));
}

TEST_CASE("injected softplus fault flips the adjoint sign") {
  auto grad = [] {
    Tape tape;
    Var x = tape.leaf(Tensor::matrix(1, 1, {0.3}));
    tape.backward(sum(softplus(x)));
    return x.grad()[0];
  };
  const double clean = grad();
  fault::inject(fault::Fault::kSoftplusAdjointSign);
  const double broken = grad();
  fault::inject(fault::Fault::kNone);
  CHECK(clean == doctest::Approx(sigmoid_value(0.3)));
  CHECK(broken == doctest::Approx(-clean));
  CHECK(grad() == clean);
}

TEST_CASE("tensor buffers are 64-byte aligned") {
  for (std::size_t n : {1u, 3u, 17u, 1000u}) {
    Tensor t(Shape{n, 1});
    CHECK(reinterpret_cast<std::uintptr_t>(t.data()) % 64 == 0);
  }
}

TEST_CASE("counter-based streams are reproducible and label-separated") {
  RngStream a(derive_key(1, "x")), b(derive_key(1, "x")), c(derive_key(1, "y"));
  for (int i = 0; i < 10; ++i) {
    const double u = a.uniform();
    CHECK(u == b.uniform());
    CHECK(u > 0.0);
    CHECK(u < 1.0);
  }
  CHECK(derive_key(1, "x") != derive_key(1, "y"));
  CHECK(derive_key(1, std::uint64_t{0}) != derive_key(1, std::uint64_t{1}));
  double m = 0.0, v = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double z = c.normal();
    m += z;
    v += z * z;
  }
  m /= n;
  v = v / n - m * m;
  CHECK(std::abs(m) < 0.01);
  CHECK(std::abs(v - 1.0) < 0.01);
}

TEST_CASE("gaussian_tensor depends only on its key") {
  CHECK(max_abs(randn({3, 3}, "k")) > 0.0);
  const Tensor a = randn({3, 3}, "k"), b = randn({3, 3}, "k");
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
}
