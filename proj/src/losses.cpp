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

#include "adassl/losses.hpp"

#include <cmath>
#include <cstdint>
#include <string>

#include "adassl/error.hpp"

namespace adassl {

double BetaSchedule::at(std::size_t step) const {
  if (steps == 0 || step >= steps) return end;
  const double t = static_cast<double>(step) / static_cast<double>(steps);
  return start + (end - start) * t;
}

void validate(const LossConfig& cfg) {
  if (!(cfg.tau > 0.0) || !std::isfinite(cfg.tau)) {
    fail(ErrorKind::kConfig, "loss.tau must be a positive finite number");
  }
  if (cfg.beta.start < 0.0 || cfg.beta.end < 0.0) {
    fail(ErrorKind::kConfig, "loss.beta must stay non-negative");
  }
  if (cfg.posterior_samples < 1) {
    fail(ErrorKind::kConfig, "loss.posterior_samples must be >= 1");
  }
}

Var infonce(const Var& sim, double tau, bool symmetric) {
  if (!(tau > 0.0)) fail(ErrorKind::kConfig, "infonce: tau must be positive");
  const std::size_t k = sim.value().rows();
  if (k == 0 || sim.value().cols() != k) {
    fail(ErrorKind::kDimension, "infonce: similarity matrix must be square and non-empty, got " +
                                    shape_string(sim.shape()));
  }
  const double log_k = std::log(static_cast<double>(k));
  auto directional = [&](const Var& z) {
    Var rows = sub(logsumexp(z, 1), diagonal(z));
    return add_scalar(mean(rows), -log_k);
  };
  Var z = scale(sim, 1.0 / tau);
  Var loss = directional(z);
  if (symmetric) loss = scale(add(loss, directional(transpose(z))), 0.5);
  return loss;
}

Var byol_loss(const Var& pred, const Var& target) {
  if (pred.shape() != target.shape()) {
    fail(ErrorKind::kDimension, "byol_loss: prediction " + shape_string(pred.shape()) +
                                    " vs target " + shape_string(target.shape()));
  }
  Var diff = sub(l2_normalize(pred), detach(l2_normalize(target)));
  return mean(sum(square(diff), 1));
}

Var kl_factorized_gaussians(const Var& mu_q, const Var& logvar_q, const Var& mu_p,
                            const Var& logvar_p) {
  Var d = sub(logvar_q, logvar_p);
  Var mean_term = mul(square(sub(mu_p, mu_q)), exp(neg(logvar_p)));
  Var inner = sub(add_scalar(add(exp(d), mean_term), -1.0), d);
  return scale(sum(inner, 1), 0.5);
}

Var expected_l0(const Var& pi) { return mean(sum(pi, 1)); }

namespace {

Var project(Forward& fw, const Var& raw) {
  return fw.bundle().config.space == ModelSpace::kHypersphere ? l2_normalize(raw) : raw;
}

double mean_diagonal(const Tensor& s) {
  double acc = 0.0;
  for (std::size_t i = 0; i < s.rows(); ++i) acc += s.at(i, i);
  return acc / static_cast<double>(s.rows());
}

double mean_cosine(const Tensor& a, const Tensor& b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.rows(); ++i) {
    double ab = 0.0, aa = 0.0, bb = 0.0;
    for (std::size_t j = 0; j < a.cols(); ++j) {
      ab += a.at(i, j) * b.at(i, j);
      aa += a.at(i, j) * a.at(i, j);
      bb += b.at(i, j) * b.at(i, j);
    }
    acc += ab / std::sqrt(aa * bb + 1e-300);
  }
  return acc / static_cast<double>(a.rows());
}

LossOutput finish(Forward& fw, Var ssl, Var reg, double beta) {
  LossOutput out;
  if (!reg.valid()) reg = fw.constant(Tensor::scalar(0.0));
  out.ssl = ssl;
  out.reg = reg;
  out.beta = beta;
  out.total = add(ssl, scale(reg, beta));
  return out;
}

const Tensor& require_view(const Tensor& t, const char* what) {
  if (t.empty() || t.size() == 0) {
    fail(ErrorKind::kConfig, std::string("batch is missing the ") + what + " view");
  }
  return t;
}

// Base SSL term for the latent-variable objectives: psi1 is the edited
// online embedding, the target is x+.
Var base_ssl(Forward& fw, const Var& psi1, const Embedding& target_online, const Tensor& x_pos,
             const LossConfig& cfg, LossDiagnostics& diag) {
  if (cfg.base == BaseLoss::kInfoNce) {
    Var sim = pairwise_similarity(psi1, target_online.psi, lambda_weights(fw, Var{}));
    diag.positive_similarity = mean_diagonal(sim.value());
    return infonce(sim, cfg.tau, cfg.symmetric);
  }
  ModelBundle& b = fw.bundle();
  Var pred = mlp_forward(fw, *b.byol_predictor, psi1);
  Var target = encode(fw, x_pos, Branch::kTarget).psi;
  diag.positive_similarity = mean_cosine(pred.value(), target.value());
  return byol_loss(pred, target);
}

}  // namespace

LossOutput infonce_step(Forward& fw, const PairBatch& batch, const LossConfig& cfg) {
  Embedding a = encode(fw, batch.x);
  Embedding p = encode(fw, batch.x_pos);
  Var sim = pairwise_similarity(a.psi, p.psi, lambda_weights(fw, a.raw));
  LossOutput out = finish(fw, infonce(sim, cfg.tau, cfg.symmetric), Var{}, 0.0);
  out.diagnostics.positive_similarity = mean_diagonal(sim.value());
  return out;
}

LossOutput hinfonce_step(Forward& fw, const PairBatch& batch, const LossConfig& cfg) {
  ModelBundle& b = fw.bundle();
  Embedding a = encode(fw, batch.x);
  Embedding p = encode(fw, batch.x_pos);
  Var psi1 = a.psi;
  if (b.mean_predictor) psi1 = project(fw, mlp_forward(fw, *b.mean_predictor, a.raw));
  Var sim = pairwise_similarity(psi1, p.psi, lambda_weights(fw, a.raw));
  LossOutput out = finish(fw, infonce(sim, cfg.tau, cfg.symmetric), Var{}, 0.0);
  out.diagnostics.positive_similarity = mean_diagonal(sim.value());
  return out;
}

LossOutput byol_step(Forward& fw, const PairBatch& batch, const LossConfig&) {
  ModelBundle& b = fw.bundle();
  Embedding a = encode(fw, batch.x);
  Var pred = mlp_forward(fw, *b.byol_predictor, a.psi);
  Var target = encode(fw, batch.x_pos, Branch::kTarget).psi;
  LossOutput out = finish(fw, byol_loss(pred, target), Var{}, 0.0);
  out.diagnostics.positive_similarity = mean_cosine(pred.value(), target.value());
  return out;
}

LossOutput adassl_v_step(Forward& fw, const PairBatch& batch, const LossConfig& cfg,
                         std::size_t step, RngKey key, const LossHooks& hooks) {
  ModelBundle& b = fw.bundle();
  Embedding a = encode(fw, batch.x);
  Embedding p = encode(fw, batch.x_pos);
  Var pair = cfg.use_additional_view ? encode(fw, require_view(batch.x_pp, "additional")).raw
                                     : p.raw;
  VariationalSample vs = sample_r_variational(fw, a.raw, pair, RMode::kPosterior,
                                              derive_key(key, std::uint64_t{0}));
  Var edited = hooks.identity_editor ? a.raw : edit(fw, *b.editor, a.raw, vs.r);
  if (!hooks.identity_editor && cfg.posterior_samples > 1) {
    const Shape shape = vs.mu_q.shape();
    Var std_q = exp(scale(vs.logvar_q, 0.5));
    for (std::size_t s = 1; s < cfg.posterior_samples; ++s) {
      Var eps = fw.constant(gaussian_tensor(shape, derive_key(key, s)));
      Var r = add(vs.mu_q, mul(std_q, eps));
      edited = add(edited, edit(fw, *b.editor, a.raw, r));
    }
    edited = scale(edited, 1.0 / static_cast<double>(cfg.posterior_samples));
  }
  LossDiagnostics diag;
  Var ssl = base_ssl(fw, project(fw, edited), p, batch.x_pos, cfg, diag);
  Var reg = mean(kl_factorized_gaussians(vs.mu_q, vs.logvar_q, vs.mu_p, vs.logvar_p));
  const double beta = hooks.beta_override >= 0.0 ? hooks.beta_override : cfg.beta.at(step);
  LossOutput out = finish(fw, ssl, reg, beta);
  diag.kl_per_dim = reg.value().item() / static_cast<double>(b.config.d_r);
  out.diagnostics = diag;
  return out;
}

LossOutput adassl_s_step(Forward& fw, const PairBatch& batch, const LossConfig& cfg,
                         std::size_t step, RngKey key, const LossHooks& hooks) {
  ModelBundle& b = fw.bundle();
  Embedding a = encode(fw, batch.x);
  Embedding p = encode(fw, batch.x_pos);
  Var pair = cfg.use_additional_view ? encode(fw, require_view(batch.x_pp, "additional")).raw
                                     : p.raw;
  SparseSample ss = sample_r_sparse(fw, a.raw, pair, fw.options().training, key,
                                    hooks.frozen_mask);
  if (hooks.mask_out) *hooks.mask_out = ss.mask;
  if (hooks.relaxed_out) *hooks.relaxed_out = ss.relaxed;
  Var edited = hooks.identity_editor ? a.raw : edit(fw, *b.editor, a.raw, ss.r);
  LossDiagnostics diag;
  Var ssl = base_ssl(fw, project(fw, edited), p, batch.x_pos, cfg, diag);
  Var reg = expected_l0(ss.pi);
  const double beta = hooks.beta_override >= 0.0 ? hooks.beta_override : cfg.beta.at(step);
  LossOutput out = finish(fw, ssl, reg, beta);
  diag.expected_l0 = reg.value().item();
  out.diagnostics = diag;
  return out;
}

LossOutput compute_loss(Forward& fw, const PairBatch& batch, const LossConfig& cfg,
                        std::size_t step, RngKey key, const LossHooks& hooks) {
  validate(cfg);
  switch (cfg.objective) {
    case Objective::kInfoNce:
    case Objective::kAnInfoNce:
      return infonce_step(fw, batch, cfg);
    case Objective::kHInfoNceAffine:
    case Objective::kHInfoNceMlp:
      return hinfonce_step(fw, batch, cfg);
    case Objective::kByol:
      return byol_step(fw, batch, cfg);
    case Objective::kAdasslV:
      return adassl_v_step(fw, batch, cfg, step, key, hooks);
    case Objective::kAdasslS:
      return adassl_s_step(fw, batch, cfg, step, key, hooks);
  }
  fail(ErrorKind::kConfig, "unknown objective");
}

}  // namespace adassl
