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

// Optimisation, evaluation (linear probes, DCI, density export) and trial
// orchestration.

#ifndef ADASSL_TRAIN_EVAL_HPP_
#define ADASSL_TRAIN_EVAL_HPP_

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "adassl/config.hpp"
#include "adassl/dgp.hpp"
#include "adassl/losses.hpp"
#include "adassl/models.hpp"

namespace adassl {

// ---- optimiser -------------------------------------------------------------------------

struct AdamWConfig {
  double lr = 5e-4;
  double weight_decay = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct OptimState {
  AdamWConfig config;
  std::vector<Tensor> m, v;
  std::size_t step = 0;

  static OptimState make(const ParameterStore& params, AdamWConfig config);
};

// Decoupled weight decay, skipped for parameters with decay == false.
// Throws a numeric error (and leaves params untouched) on a non-finite gradient.
void adamw_step(OptimState& optim, ParameterStore& params, const std::vector<Tensor>& grads);

// ---- training --------------------------------------------------------------------------

struct StepLog {
  std::size_t step = 0;
  double total = 0.0, ssl = 0.0, reg = 0.0, beta = 0.0, lr = 0.0;
  double kl_per_dim = 0.0, expected_l0 = 0.0, positive_similarity = 0.0;
};

std::string step_log_json(const StepLog& log);

struct TrialKeys {
  RngKey root = 0;
  RngKey dgp = 0;
  RngKey init = 0;
  RngKey batches = 0;
  RngKey loss = 0;
  RngKey eval = 0;
};

TrialKeys trial_keys(const ExperimentConfig& cfg, std::size_t trial);

PairBatch training_batch(const DgpParams& dgp, std::size_t batch, RngKey key,
                         LatentBatch* latents_out = nullptr);

struct TrainResult {
  DgpParams dgp;
  ModelBundle bundle;
  std::vector<StepLog> trace;
  // Mean total loss over the last min(1000, steps) steps.
  double final_loss = 0.0;
  bool aborted = false;
  std::string abort_reason;
  std::size_t steps_done = 0;
};

struct TrainHooks {
  // Called with every logged step (every train.log_every steps and the last).
  std::function<void(const StepLog&)> on_log;
  // Saved before the step that produced a non-finite loss or gradient.
  std::string abort_checkpoint_path;
};

TrainResult train(const ExperimentConfig& cfg, std::size_t trial, const TrainHooks& hooks = {});

// ---- evaluation ------------------------------------------------------------------------

// Rows of psi(x) (normalised on the hypersphere), computed in eval mode in chunks.
Tensor embed(ModelBundle& bundle, const Tensor& x);

using Embedder = std::function<Tensor(const Tensor&)>;

struct LinearProbe {
  Eigen::MatrixXd weights;    // [d x k]
  Eigen::RowVectorXd intercept;  // [1 x k]

  Eigen::MatrixXd predict(const Eigen::MatrixXd& x) const;
};

// Centred ridge regression through the SVD: W = V diag(s / (s^2 + eps)) U^T Yc.
LinearProbe fit_linear_probe(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y,
                             double ridge_eps = 1e-8);

// 1 - SS_res / SS_tot per target column, then averaged over columns.
double r_squared(const Eigen::MatrixXd& y, const Eigen::MatrixXd& y_hat);
std::vector<double> r_squared_per_dim(const Eigen::MatrixXd& y, const Eigen::MatrixXd& y_hat);

struct RegimeScore {
  ProbeRegime regime = ProbeRegime::kPz;
  double r2_train = 0.0;
  double r2_test = 0.0;
};

std::vector<RegimeScore> evaluate_regimes(const Embedder& embedder, const DgpParams& dgp,
                                          const ExperimentConfig::Eval& eval, RngKey key);

// Minimises (1 / 2n) ||y - X w||^2 + lambda ||w||_1 by cyclic coordinate descent.
Eigen::VectorXd lasso(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, double lambda,
                      std::size_t max_iter = 1000, double tol = 1e-7);

// Importance matrix [embedding dims x factors] from per-factor Lasso fits on
// standardised data.
Eigen::MatrixXd dci_importance(const Eigen::MatrixXd& embeddings, const Eigen::MatrixXd& factors,
                               double lambda);
// Sum_j rho_j (1 - H_K(P_j)); rows with zero importance are excluded.
double dci_from_importance(const Eigen::MatrixXd& importance);
double dci_disentanglement(const Eigen::MatrixXd& embeddings, const Eigen::MatrixXd& factors,
                           double lambda);

// Writes `n` rows (model, z_*, zpos_hat_*, zpos_true_*) to `path` (skipped
// when empty); returns the per-dimension variance of the projected z+ cloud.
std::vector<double> density_export(ModelBundle& bundle, const DgpParams& dgp, std::size_t n,
                                   const std::string& path, RngKey key,
                                   std::size_t fit_samples = 20000);

// ---- trials ----------------------------------------------------------------------------

struct EvalReport {
  std::string model;
  std::size_t trial = 0;
  std::uint64_t seed = 0;
  bool completed = false;
  std::string failure;
  std::vector<RegimeScore> scores;
  double dci = 0.0;
  double final_loss = 0.0;
  double expected_l0 = 0.0;  // AdaSSL-S diagnostic averaged over the last logged steps
  double heteroscedasticity_ratio = 0.0;
  std::vector<StepLog> trace;
  std::string density_path;
};

std::string report_json(const EvalReport& report);
EvalReport report_from_json(const std::string& text);

// Trains, evaluates and (if io paths are set) writes artifacts for one trial.
EvalReport run_trial(const ExperimentConfig& cfg, std::size_t trial,
                     const std::string& trial_dir = "");

// Re-scores DCI for a saved trial model under another lasso penalty.
double checkpoint_dci(const ExperimentConfig& cfg, std::size_t trial,
                      const std::string& checkpoint_path, double lambda);

// Probe baseline on raw observations.
EvalReport identity_trial(const ExperimentConfig& cfg, std::size_t trial);

struct AggregateRow {
  std::string model;
  std::string regime;
  std::string metric;
  double mean = 0.0;
  double std = 0.0;
  std::size_t n_seeds = 0;
};

// Mean and population standard deviation over completed reports.
std::vector<AggregateRow> aggregate(const std::vector<EvalReport>& reports);
std::string results_csv(const std::vector<AggregateRow>& rows);

struct TrialSetResult {
  std::vector<EvalReport> reports;
  std::vector<AggregateRow> rows;
  bool complete = true;
};

// Runs trials 0..n_seeds-1 and writes config.json, results.csv, per-trial
// logs/reports and, if anything failed, failures.json under `run_dir`.
TrialSetResult run_trials(const ExperimentConfig& cfg, const std::string& run_dir,
                          bool include_identity = false);

}  // namespace adassl

#endif  // ADASSL_TRAIN_EVAL_HPP_
