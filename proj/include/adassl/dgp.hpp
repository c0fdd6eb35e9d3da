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

// Synthetic data-generating process: correlated content latents, independent
// style latents, a conditional law for the positive view, and an invertible
// MLP that mixes latents into observations.

#ifndef ADASSL_DGP_HPP_
#define ADASSL_DGP_HPP_

#include <Eigen/Dense>

#include <array>
#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "adassl/rng.hpp"
#include "adassl/tensor.hpp"

namespace adassl {

enum class NoiseRegime { kZero, kIsotropic, kAnisotropic, kHeteroscedastic, kComplex };

const char* regime_name(NoiseRegime regime);
NoiseRegime parse_regime(std::string_view name);

enum class WeightNormalization { kRows, kMatrix };

const char* weight_normalization_name(WeightNormalization w);
WeightNormalization parse_weight_normalization(std::string_view name);

inline constexpr std::size_t kMixingCandidates = 25000;
inline constexpr double kMixingSlope = 0.2;

// softplus^{-1}(1) = log(e - 1).
double inverse_softplus_one();

struct MixingMlp {
  // x_{k+1} = act(W_k x_k + b_k); no activation after the last layer.
  std::array<Eigen::MatrixXd, 3> weights;
  std::array<Eigen::VectorXd, 3> biases;
  std::array<double, 3> condition_numbers{};
  std::size_t candidates_per_layer = 0;
  double slope = kMixingSlope;

  std::size_t dim() const { return static_cast<std::size_t>(weights[0].rows()); }
  // Maps each row of z [B x n] to an observation row.
  Tensor apply(const Tensor& z) const;
};

double condition_number(const Eigen::MatrixXd& m);
void normalize_weights(Eigen::MatrixXd& m, WeightNormalization mode);
// Index of the first candidate with the smallest condition number.
std::size_t select_min_condition(std::span<const Eigen::MatrixXd> pool);

MixingMlp build_mixing(std::size_t n, RngKey key,
                       WeightNormalization mode = WeightNormalization::kRows,
                       std::size_t candidates = kMixingCandidates);

// Inverse-Wishart(df, I) through the Bartlett factor of Wishart(df, I).
Eigen::MatrixXd sample_inverse_wishart(std::size_t p, double df, RngStream& rng);
// Sigma ~ W^{-1}(n_c + 2, I); retries a bounded number of times if the draw
// is not numerically SPD.
Eigen::MatrixXd sample_sigma(std::size_t n_c, RngKey key);

struct DgpConfig {
  std::size_t n_c = 5;
  std::size_t n_s = 5;
  NoiseRegime regime = NoiseRegime::kHeteroscedastic;
  WeightNormalization weight_normalization = WeightNormalization::kRows;
  std::size_t mixing_candidates = kMixingCandidates;
};

struct DgpParams {
  std::size_t n_c = 5;
  std::size_t n_s = 5;
  NoiseRegime regime = NoiseRegime::kZero;
  Eigen::MatrixXd sigma;
  Eigen::MatrixXd sigma_chol;
  Eigen::VectorXd sigma_sq;  // anisotropic per-dimension variances
  Eigen::MatrixXd w_sigma;
  Eigen::MatrixXd w_mu;
  Eigen::VectorXd b;
  MixingMlp mixing;

  std::size_t n() const { return n_c + n_s; }
};

DgpParams make_dgp(const DgpConfig& config, RngKey key);

struct LatentBatch {
  Tensor c, s;
  Tensor c_pos, s_pos;
  Tensor s_pp;
  Tensor kappa;  // complex regime only
  Tensor iota;   // complex regime only; 1 marks a resampled coordinate

  std::size_t batch() const { return c.rows(); }
  Tensor z() const;
  Tensor z_pos() const;
  Tensor z_pp() const;
};

struct PairBatch {
  Tensor x, x_pos, x_pp;
};

LatentBatch sample_latents(const DgpParams& params, std::size_t batch, RngKey key);

// Draws c+ | c row-wise for the unimodal regimes.
Tensor sample_positive(const DgpParams& params, const Tensor& c, RngKey key);

enum class EvalKind { kTrain, kWide };
inline constexpr double kWideVariance = 5.0;

// Only c and s are populated.
LatentBatch eval_distribution(const DgpParams& params, EvalKind kind, std::size_t batch,
                              RngKey key);

PairBatch mix(const LatentBatch& latents, const MixingMlp& g);

void export_batch_csv(const LatentBatch& latents, const PairBatch& pairs,
                      const std::string& path);

struct HeteroscedasticityReport {
  std::size_t used = 0;
  std::size_t excluded = 0;
  std::vector<double> frobenius_norms;
  std::vector<double> leading_eigenvalues;
  double frobenius_ratio = 0.0;
  double eigenvalue_ratio = 0.0;
  std::vector<std::string> warnings;
};

using VectorMap = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;

// Pushes Sigma through finite-difference Jacobians J(z) Sigma J(z)^T at each
// sample and reports how much the resulting covariances vary.
HeteroscedasticityReport heteroscedasticity_probe(const VectorMap& h,
                                                  const std::vector<Eigen::VectorXd>& z_samples,
                                                  const Eigen::MatrixXd& sigma,
                                                  double step = 1e-6);

// Helpers shared with the verification suite.
Eigen::MatrixXd to_eigen(const Tensor& t);
Tensor from_eigen(const Eigen::MatrixXd& m);

}  // namespace adassl

#endif  // ADASSL_DGP_HPP_
