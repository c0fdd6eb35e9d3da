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

#include "adassl/gradcheck.hpp"

#include <algorithm>
#include <cfloat>
#include <cmath>

#include "adassl/error.hpp"
#include "adassl/losses.hpp"
#include "adassl/train_eval.hpp"

namespace adassl {

double GradCheckResult::max_rel_error() const {
  double worst = 0.0;
  for (const auto& t : tensors) {
    if (!t.resolved) continue;
    // NaN compares false everywhere; surface it as an infinite error.
    worst = std::isnan(t.rel_error) ? INFINITY : std::max(worst, t.rel_error);
  }
  return worst;
}

const TensorCheck* GradCheckResult::worst() const {
  const TensorCheck* w = nullptr;
  for (const auto& t : tensors) {
    if (!t.resolved) continue;
    if (!w || !(t.rel_error <= w->rel_error)) w = &t;
  }
  return w;
}

double relative_error(const Tensor& analytic, const Tensor& numeric, double floor) {
  if (analytic.size() != numeric.size()) {
    fail(ErrorKind::kDimension, "relative_error: size mismatch");
  }
  double diff = 0.0, na = 0.0, nn = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    diff += (analytic[i] - numeric[i]) * (analytic[i] - numeric[i]);
    na += analytic[i] * analytic[i];
    nn += numeric[i] * numeric[i];
  }
  return std::sqrt(diff) / std::max({std::sqrt(na), std::sqrt(nn), floor});
}

namespace {

double norm(const Tensor& t) {
  double acc = 0.0;
  for (double v : t.values()) acc += v * v;
  return std::sqrt(acc);
}

}  // namespace

GradCheckResult check_function(const ScalarFn& f, const std::vector<Tensor>& inputs,
                               const std::vector<std::string>& names, double step) {
  std::vector<Tensor> grads;
  {
    Tape tape;
    std::vector<Var> leaves;
    for (const auto& t : inputs) leaves.push_back(tape.leaf(t));
    Var out = f(leaves);
    tape.backward(out);
    for (const auto& l : leaves) grads.push_back(l.grad());
  }
  auto eval = [&](const std::vector<Tensor>& values) {
    Tape tape;
    std::vector<Var> leaves;
    for (const auto& t : values) leaves.push_back(tape.constant(t));
    return f(leaves).value().item();
  };
  GradCheckResult result;
  std::vector<Tensor> work = inputs;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    Tensor numeric = Tensor::zeros_like(inputs[i]);
    for (std::size_t j = 0; j < inputs[i].size(); ++j) {
      const double v = inputs[i][j];
      work[i][j] = v + step;
      const double up = eval(work);
      work[i][j] = v - step;
      const double down = eval(work);
      work[i][j] = v;
      numeric[j] = (up - down) / (2.0 * step);
    }
    TensorCheck c;
    c.name = i < names.size() ? names[i] : "input" + std::to_string(i);
    c.analytic_norm = norm(grads[i]);
    c.numeric_norm = norm(numeric);
    c.rel_error = relative_error(grads[i], numeric);
    result.tensors.push_back(c);
  }
  return result;
}

ExperimentConfig gradcheck_config(Objective objective, NoiseRegime regime) {
  ExperimentConfig c;
  c.name = "gradcheck";
  c.dgp.n_c = 2;
  c.dgp.n_s = 2;
  c.dgp.regime = regime;
  c.dgp.mixing_candidates = 50;
  c.model.width_multiplier = 2;
  c.model.head_width = 8;
  c.model.d_r = 2;
  c.model.hinfonce_predictor =
      objective == Objective::kHInfoNceAffine || objective == Objective::kHInfoNceMlp;
  c.loss.objective = objective;
  c.loss.base = objective == Objective::kByol ? BaseLoss::kByol : BaseLoss::kInfoNce;
  c.train.batch = 4;
  c.eval.probe_train = 64;
  c.eval.probe_test = 64;
  return with_objective_defaults(c);
}

GradCheckResult check_objective(const ExperimentConfig& cfg, std::uint64_t seed, double step) {
  validate(cfg);
  const LossConfig lcfg = loss_config(cfg);
  const DgpParams dgp = make_dgp(dgp_config(cfg), derive_key(seed, "dgp"));
  ModelBundle bundle = make_bundle(model_config(cfg), lcfg.objective, lcfg.base,
                                   derive_key(seed, "init"));
  const PairBatch batch = training_batch(dgp, cfg.train.batch, derive_key(seed, "batch"));
  const RngKey key = derive_key(seed, "loss");
  const bool latent = lcfg.objective == Objective::kAdasslV ||
                      lcfg.objective == Objective::kAdasslS;
  const bool sparse = lcfg.objective == Objective::kAdasslS;

  LossHooks base_hooks;
  // Weight the regulariser so its gradient is exercised from step 0.
  if (latent) base_hooks.beta_override = 1.0;

  std::vector<Tensor> analytic;
  Tensor mask, relaxed;
  double loss_value = 0.0;
  {
    Tape tape;
    Forward fw(bundle, tape, ForwardOptions{true, false, true});
    LossHooks hooks = base_hooks;
    hooks.mask_out = &mask;
    hooks.relaxed_out = &relaxed;
    LossOutput out = compute_loss(fw, batch, lcfg, 0, key, hooks);
    tape.backward(out.total);
    analytic = fw.gradients();
    loss_value = out.total.value().item();
  }

  auto eval = [&](const Tensor* frozen, Tensor* relaxed_out) {
    Tape tape;
    Forward fw(bundle, tape, ForwardOptions{true, false, false});
    LossHooks hooks = base_hooks;
    hooks.frozen_mask = frozen;
    hooks.relaxed_out = relaxed_out;
    return compute_loss(fw, batch, lcfg, 0, key, hooks).total.value().item();
  };

  // dL/dmask with the mask held as a free input.
  Tensor dl_dmask;
  if (sparse) {
    dl_dmask = Tensor::zeros_like(mask);
    Tensor m = mask;
    for (std::size_t k = 0; k < m.size(); ++k) {
      const double v = m[k];
      m[k] = v + step;
      const double up = eval(&m, nullptr);
      m[k] = v - step;
      const double down = eval(&m, nullptr);
      m[k] = v;
      dl_dmask[k] = (up - down) / (2.0 * step);
    }
  }

  GradCheckResult result;
  for (std::size_t i = 0; i < bundle.params.size(); ++i) {
    Tensor& value = bundle.params[i].value;
    Tensor numeric = Tensor::zeros_like(value);
    for (std::size_t j = 0; j < value.size(); ++j) {
      const double v = value[j];
      Tensor r_up, r_down;
      value[j] = v + step;
      const double up = eval(sparse ? &mask : nullptr, sparse ? &r_up : nullptr);
      value[j] = v - step;
      const double down = eval(sparse ? &mask : nullptr, sparse ? &r_down : nullptr);
      value[j] = v;
      double g = (up - down) / (2.0 * step);
      if (sparse) {
        for (std::size_t k = 0; k < dl_dmask.size(); ++k) {
          g += dl_dmask[k] * (r_up[k] - r_down[k]) / (2.0 * step);
        }
      }
      numeric[j] = g;
    }
    TensorCheck c;
    c.name = bundle.params[i].name;
    c.analytic_norm = norm(analytic[i]);
    c.numeric_norm = norm(numeric);
    c.rel_error = relative_error(analytic[i], numeric);
    // Round-off of a central difference is about eps * |L| / step per
    // element; two orders of magnitude above that is below resolution.
    const double noise_floor = 100.0 * std::sqrt(static_cast<double>(value.size())) *
                               DBL_EPSILON * std::max(1.0, std::abs(loss_value)) / step;
    c.resolved = std::max(c.analytic_norm, c.numeric_norm) > noise_floor;
    result.tensors.push_back(c);
  }
  return result;
}

}  // namespace adassl
