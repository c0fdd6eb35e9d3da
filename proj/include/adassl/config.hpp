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

// Experiment configuration. JSON on disk; the schema is documented in
// README.md. Unknown keys are rejected.

#ifndef ADASSL_CONFIG_HPP_
#define ADASSL_CONFIG_HPP_

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "adassl/dgp.hpp"
#include "adassl/losses.hpp"
#include "adassl/models.hpp"

namespace adassl {

enum class SeedPolicy { kPerTrial, kShared };
enum class ProbeRegime { kPz, kWide, kWideOod };

const char* seed_policy_name(SeedPolicy p);
const char* probe_regime_name(ProbeRegime r);
ProbeRegime parse_probe_regime(std::string_view name);

struct ExperimentConfig {
  struct Dgp {
    std::size_t n_c = 5;
    std::size_t n_s = 5;
    NoiseRegime regime = NoiseRegime::kHeteroscedastic;
    WeightNormalization weight_normalization = WeightNormalization::kRows;
    std::size_t mixing_candidates = kMixingCandidates;
    SeedPolicy seed_policy = SeedPolicy::kPerTrial;
  } dgp;

  struct Model {
    ModelSpace space = ModelSpace::kHypersphere;
    std::size_t encoder_hidden_layers = 4;
    std::size_t width_multiplier = 10;
    double encoder_slope = 0.01;
    std::size_t head_width = 64;
    std::size_t head_hidden_layers = 2;
    std::size_t predictor_hidden_layers = 3;
    std::size_t d_r = 5;
    std::string editor = "default";  // default | additive | linear | mlp | modular
    ModularBias modular_bias = ModularBias::kVector;
    std::string lambda = "auto";     // auto | global_scalar | global_diag | conditional_affine | conditional_mlp
    bool hinfonce_predictor = false;
    double gumbel_temperature = 1.0;
    double logvar_clamp = 8.0;
  } model;

  struct Loss {
    Objective objective = Objective::kInfoNce;
    BaseLoss base = BaseLoss::kInfoNce;
    double tau = 1.0;
    BetaSchedule beta;
    bool symmetric = false;
    bool use_additional_view = false;
    std::size_t posterior_samples = 1;
  } loss;

  struct Train {
    std::size_t steps = 20000;
    std::size_t batch = 512;
    double lr = 5e-4;
    double weight_decay = 1e-4;
    double ema_momentum = 0.996;
    std::size_t log_every = 100;
  } train;

  struct Eval {
    std::size_t probe_train = 20000;
    std::size_t probe_test = 20000;
    std::vector<ProbeRegime> regimes{ProbeRegime::kPz, ProbeRegime::kWide,
                                     ProbeRegime::kWideOod};
    double ridge_eps = 1e-8;
    double dci_lambda = 0.01;
    std::size_t dci_samples = 5000;
    std::size_t density_n = 0;  // 0 disables the density export
    std::size_t hetero_samples = 100;  // 0 disables the learned-map covariance probe
  } eval;

  struct Trials {
    std::size_t n_seeds = 3;
    std::uint64_t base_seed = 0;
  } trials;

  struct Io {
    std::string output_dir = "runs";
    int float_width = 64;  // 64 or 32
    bool checkpoints = true;
  } io;

  std::string name = "experiment";
};

// Field-level and cross-field validation; throws a config error naming the field.
void validate(const ExperimentConfig& cfg);

// Sets tau, the symmetric flag and the beta schedule to the defaults for the
// configured objective and noise regime.
ExperimentConfig with_objective_defaults(ExperimentConfig cfg);

std::string to_json(const ExperimentConfig& cfg);
ExperimentConfig config_from_json(std::string_view text);
ExperimentConfig load_config(const std::string& path);
// `path` is dotted (e.g. "train.steps"); `value` is parsed as JSON, falling
// back to a plain string.
void apply_override(ExperimentConfig& cfg, std::string_view path, std::string_view value);

ModelConfig model_config(const ExperimentConfig& cfg);
LossConfig loss_config(const ExperimentConfig& cfg);
DgpConfig dgp_config(const ExperimentConfig& cfg);

}  // namespace adassl

#endif  // ADASSL_CONFIG_HPP_
