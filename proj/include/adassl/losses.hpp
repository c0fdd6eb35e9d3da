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

// Training objectives: the InfoNCE family, BYOL, and the two latent-variable
// objectives with their KL and expected-L0 regularisers.

#ifndef ADASSL_LOSSES_HPP_
#define ADASSL_LOSSES_HPP_

#include <cstddef>

#include "adassl/dgp.hpp"
#include "adassl/models.hpp"
#include "adassl/rng.hpp"
#include "adassl/tensor.hpp"

namespace adassl {

// Linear ramp from `start` to `end` over `steps` optimizer steps, then flat.
struct BetaSchedule {
  double start = 0.0;
  double end = 0.0;
  std::size_t steps = 0;

  double at(std::size_t step) const;
};

struct LossConfig {
  Objective objective = Objective::kInfoNce;
  BaseLoss base = BaseLoss::kInfoNce;
  double tau = 1.0;
  BetaSchedule beta;
  bool symmetric = false;
  // Infer r from (x, x++) instead of (x, x+).
  bool use_additional_view = false;
  // Posterior samples whose edited embeddings are averaged before
  // normalisation; 1 is the usual single-sample estimator.
  std::size_t posterior_samples = 1;
};

void validate(const LossConfig& cfg);

struct LossDiagnostics {
  double kl_per_dim = 0.0;
  double expected_l0 = 0.0;
  double positive_similarity = 0.0;
};

struct LossOutput {
  Var total;
  Var ssl;
  Var reg;  // constant zero for objectives without a regulariser
  double beta = 0.0;
  LossDiagnostics diagnostics;
};

// Mean over rows of -s_ii/tau + logsumexp_j(s_ij/tau) - log K. The symmetric
// form averages this with the same quantity on the transpose.
Var infonce(const Var& sim, double tau, bool symmetric = false);

// Mean squared distance between the normalised prediction and the normalised
// target; the target is cut from the graph.
Var byol_loss(const Var& pred, const Var& target);

// KL(q || p) of factorised Gaussians, summed over dimensions: [B x 1].
Var kl_factorized_gaussians(const Var& mu_q, const Var& logvar_q, const Var& mu_p,
                            const Var& logvar_p);

// Batch mean of sum_i pi_i.
Var expected_l0(const Var& pi);

// Test hooks for the gradient checks and reductions.
struct LossHooks {
  // AdaSSL-S: use this mask instead of sampling one.
  const Tensor* frozen_mask = nullptr;
  // AdaSSL: skip the editor and use f(x) unchanged.
  bool identity_editor = false;
  // Replaces the scheduled beta.
  double beta_override = -1.0;
  // AdaSSL-S: receives the sampled hard mask.
  Tensor* mask_out = nullptr;
  // AdaSSL-S: receives the relaxed gate values the straight-through mask
  // differentiates through.
  Tensor* relaxed_out = nullptr;
};

LossOutput infonce_step(Forward& fw, const PairBatch& batch, const LossConfig& cfg);
LossOutput hinfonce_step(Forward& fw, const PairBatch& batch, const LossConfig& cfg);
LossOutput byol_step(Forward& fw, const PairBatch& batch, const LossConfig& cfg);
LossOutput adassl_v_step(Forward& fw, const PairBatch& batch, const LossConfig& cfg,
                         std::size_t step, RngKey key, const LossHooks& hooks = {});
LossOutput adassl_s_step(Forward& fw, const PairBatch& batch, const LossConfig& cfg,
                         std::size_t step, RngKey key, const LossHooks& hooks = {});

// Dispatches on cfg.objective.
LossOutput compute_loss(Forward& fw, const PairBatch& batch, const LossConfig& cfg,
                        std::size_t step, RngKey key, const LossHooks& hooks = {});

}  // namespace adassl

#endif  // ADASSL_LOSSES_HPP_
