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

// Trainable components: encoder, similarity weights, variational and sparse
// latent predictors, editing functions, the distillation predictor and the
// EMA target shadow.

#ifndef ADASSL_MODELS_HPP_
#define ADASSL_MODELS_HPP_

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "adassl/rng.hpp"
#include "adassl/tensor.hpp"

namespace adassl {

enum class Objective {
  kInfoNce, kAnInfoNce, kHInfoNceAffine, kHInfoNceMlp, kByol, kAdasslV, kAdasslS,
};
enum class BaseLoss { kInfoNce, kByol };
enum class ModelSpace { kUnbounded, kHypersphere };
enum class LambdaVariant { kGlobalScalar, kGlobalDiag, kConditionalAffine, kConditionalMlp };
enum class EditorVariant { kAdditive, kLinear, kMlp, kModular };
// Shape of the per-module offset b_i of the modular editor.
enum class ModularBias { kVector, kScalar };

const char* objective_name(Objective o);
Objective parse_objective(std::string_view name);
const char* base_loss_name(BaseLoss b);
BaseLoss parse_base_loss(std::string_view name);
const char* space_name(ModelSpace s);
ModelSpace parse_space(std::string_view name);
const char* editor_name(EditorVariant e);
EditorVariant parse_editor(std::string_view name);
const char* modular_bias_name(ModularBias b);
ModularBias parse_modular_bias(std::string_view name);

struct ModelConfig {
  ModelSpace space = ModelSpace::kHypersphere;
  std::size_t input_dim = 10;
  std::size_t encoder_hidden_layers = 4;
  std::size_t width_multiplier = 10;  // hidden width = multiplier * input_dim
  double encoder_slope = 0.01;
  double head_slope = 0.01;
  std::size_t head_width = 64;
  std::size_t head_hidden_layers = 2;
  std::size_t predictor_hidden_layers = 3;
  std::size_t d_r = 5;
  // Unset means the objective's default: linear for AdaSSL-V, modular for AdaSSL-S.
  std::optional<EditorVariant> editor;
  ModularBias modular_bias = ModularBias::kVector;
  // H-InfoNCE mean predictor; identity when E[z+|z] = z.
  bool hinfonce_predictor = false;
  double gumbel_temperature = 1.0;
  double logvar_clamp = 8.0;

  std::size_t hidden_width() const { return width_multiplier * input_dim; }
  std::size_t embedding_dim() const {
    return space == ModelSpace::kHypersphere ? input_dim + 1 : input_dim;
  }
};

struct Parameter {
  std::string name;
  Tensor value;
  bool decay = true;  // false for biases
};

class ParameterStore {
 public:
  std::size_t add(std::string name, Tensor value, bool decay);
  std::size_t size() const { return params_.size(); }
  Parameter& operator[](std::size_t i) { return params_[i]; }
  const Parameter& operator[](std::size_t i) const { return params_[i]; }
  std::vector<Parameter>& all() { return params_; }
  const std::vector<Parameter>& all() const { return params_; }
  std::size_t scalar_count() const;

 private:
  std::vector<Parameter> params_;
};

struct Linear {
  std::size_t weight = 0;  // [in x out]
  std::size_t bias = 0;    // [1 x out]
  std::size_t in = 0, out = 0;
};

struct BatchNormLayer {
  std::size_t gamma = 0, beta = 0;
  BatchNormState state;
};

struct Mlp {
  std::vector<Linear> layers;
  std::vector<BatchNormLayer> norms;  // one per hidden layer when enabled
  double slope = 0.01;
  bool batch_norm = false;
};

struct LambdaHead {
  LambdaVariant variant = LambdaVariant::kGlobalScalar;
  std::size_t raw = 0;  // pre-softplus global parameter
  std::optional<Mlp> net;  // conditional variants
};

struct Editor {
  EditorVariant variant = EditorVariant::kLinear;
  ModularBias bias_mode = ModularBias::kVector;
  std::size_t w = 0;  // additive: [d_r x d_f]
  std::optional<Linear> linear;
  std::optional<Mlp> net;
  std::size_t a = 0, b = 0, offset = 0;  // modular: A, B [d_r x d_f]; offset per bias_mode
};

struct ModelBundle {
  ModelConfig config;
  Objective objective = Objective::kInfoNce;
  BaseLoss base = BaseLoss::kInfoNce;
  ParameterStore params;
  Mlp encoder;
  std::optional<LambdaHead> lambda;
  std::optional<Mlp> mean_predictor;  // H-InfoNCE
  std::optional<Mlp> byol_predictor;  // eta
  std::optional<Mlp> q_phi;
  std::optional<Mlp> p_theta;
  std::optional<Mlp> sparse;
  std::optional<Editor> editor;
  std::vector<std::size_t> encoder_params;
  std::vector<Tensor> ema_shadow;  // aligned with encoder_params

  bool uses_ema() const { return !ema_shadow.empty(); }
};

ModelBundle make_bundle(const ModelConfig& config, Objective objective, BaseLoss base,
                        RngKey init_key);

struct ForwardOptions {
  bool training = true;
  bool update_running_stats = true;
  bool track_gradients = true;
};

// Binds bundle parameters onto a tape for one forward pass.
class Forward {
 public:
  Forward(ModelBundle& bundle, Tape& tape, ForwardOptions options = {});

  Var param(std::size_t index);
  Var constant(Tensor t) { return tape_.constant(std::move(t)); }
  Tape& tape() { return tape_; }
  ModelBundle& bundle() { return bundle_; }
  const ForwardOptions& options() const { return options_; }
  BatchNormMode norm_mode() const { return {options_.training, options_.update_running_stats}; }
  // Gradients aligned with bundle.params; zeros for parameters never touched.
  std::vector<Tensor> gradients() const;

 private:
  ModelBundle& bundle_;
  Tape& tape_;
  ForwardOptions options_;
  std::vector<int> bound_;
};

Var linear(Forward& fw, const Linear& layer, const Var& x);
Var mlp_forward(Forward& fw, Mlp& net, const Var& x);

struct Embedding {
  Var raw;  // f(x)
  Var psi;  // l2-normalised on the hypersphere, raw otherwise
};

enum class Branch { kOnline, kTarget };

Embedding encode(Forward& fw, const Tensor& x, Branch branch = Branch::kOnline);

// Realised positive similarity weights: [1 x 1], [1 x d] or [B x d].
Var lambda_weights(Forward& fw, const Var& f_x);

enum class SimilarityVariant { kInfoNce, kAnInfoNce, kHInfoNce, kAdassl };

// Row-aligned pair similarity -(a - b)^T W (a - b) with W broadcast from
// `weights`; returns [B x 1].
Var similarity(SimilarityVariant variant, const Var& psi_a, const Var& psi_b,
               const Var& weights);
// S_ij = -(a_i - b_j)^T W_i (a_i - b_j) for weights broadcastable to [K x d].
Var pairwise_similarity(const Var& psi_a, const Var& psi_b, const Var& weights);

Var edit(Forward& fw, const Editor& editor, const Var& f_x, const Var& r);

enum class RMode { kPosterior, kPrior };

struct VariationalSample {
  Var r;
  Var mu_q, logvar_q;
  Var mu_p, logvar_p;
};

// `f_pair` is ignored in prior mode. With `use_mean` the prior mean is
// returned instead of a sample.
VariationalSample sample_r_variational(Forward& fw, const Var& f_x, const Var& f_pair,
                                       RMode mode, RngKey key, bool use_mean = false);

struct SparseSample {
  Var r;
  Var pi;
  Var logits;
  Tensor mask;     // hard {0,1} mask used in the forward pass
  Tensor relaxed;  // Gumbel-Sigmoid relaxation (training) or pi (eval)
};

// `frozen_mask`, when given, replaces the sampled mask by a constant.
SparseSample sample_r_sparse(Forward& fw, const Var& f_x, const Var& f_pair, bool train_mode,
                             RngKey key, const Tensor* frozen_mask = nullptr);

void ema_sync(ModelBundle& bundle);
void ema_update(ModelBundle& bundle, double momentum);

inline constexpr int kCheckpointVersion = 1;
void save_checkpoint(const ModelBundle& bundle, const std::string& path);
void load_checkpoint(ModelBundle& bundle, const std::string& path);

Tensor gaussian_tensor(Shape shape, RngKey key);

}  // namespace adassl

#endif  // ADASSL_MODELS_HPP_
