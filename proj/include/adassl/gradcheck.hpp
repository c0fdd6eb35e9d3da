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

// Central finite-difference checks of tape gradients, for single ops and for
// full objective steps on a reduced model.

#ifndef ADASSL_GRADCHECK_HPP_
#define ADASSL_GRADCHECK_HPP_

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "adassl/config.hpp"
#include "adassl/models.hpp"
#include "adassl/tensor.hpp"

namespace adassl {

struct TensorCheck {
  std::string name;
  double analytic_norm = 0.0;
  double numeric_norm = 0.0;
  // ||g_analytic - g_fd|| / max(||g_analytic||, ||g_fd||, floor)
  double rel_error = 0.0;
  // False when both gradients sit below the finite-difference round-off
  // floor (e.g. a bias feeding batch norm, whose gradient is exactly zero);
  // such tensors agree to within what the oracle can resolve.
  bool resolved = true;
};

struct GradCheckResult {
  std::vector<TensorCheck> tensors;

  // Over resolved tensors only.
  double max_rel_error() const;
  const TensorCheck* worst() const;
  bool passed(double tolerance) const { return max_rel_error() < tolerance; }
};

// Norm-wise relative error with `floor` guarding all-zero gradients.
double relative_error(const Tensor& analytic, const Tensor& numeric, double floor = 1e-12);

// Builds a scalar from leaves holding `inputs`, on a fresh 64-bit tape.
using ScalarFn = std::function<Var(const std::vector<Var>&)>;

GradCheckResult check_function(const ScalarFn& f, const std::vector<Tensor>& inputs,
                               const std::vector<std::string>& names = {}, double step = 1e-6);

// Reduced configuration used for full-step checks: n_c = n_s = 2, narrow
// layers, d_r = 2, batch 4.
ExperimentConfig gradcheck_config(Objective objective, NoiseRegime regime);

// Checks d(total)/d(parameters) of one objective step. Batch-norm layers use
// batch statistics without updating running estimates so every evaluation
// sees the same function. AdaSSL-S routes the mask gradient through the
// relaxed gates, so its oracle combines a frozen-mask derivative with the
// chain rule through those gates.
GradCheckResult check_objective(const ExperimentConfig& cfg, std::uint64_t seed,
                                double step = 1e-6);

}  // namespace adassl

#endif  // ADASSL_GRADCHECK_HPP_
