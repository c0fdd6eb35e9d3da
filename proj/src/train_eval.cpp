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

#include "adassl/train_eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#if defined(__GLIBC__)
#include <malloc.h>
#endif
#if defined(__SSE__)
#include <xmmintrin.h>
#endif

#include <json.hpp>

#include "adassl/error.hpp"
#include "adassl/version.hpp"

namespace adassl {

using nlohmann::json;
namespace fs = std::filesystem;

// ---- optimiser -------------------------------------------------------------------------

OptimState OptimState::make(const ParameterStore& params, AdamWConfig config) {
  OptimState s;
  s.config = config;
  for (const auto& p : params.all()) {
    s.m.push_back(Tensor::zeros_like(p.value));
    s.v.push_back(Tensor::zeros_like(p.value));
  }
  return s;
}

void adamw_step(OptimState& optim, ParameterStore& params, const std::vector<Tensor>& grads) {
  if (grads.size() != params.size() || optim.m.size() != params.size()) {
    fail(ErrorKind::kDimension, "adamw_step: gradient / state count does not match parameters");
  }
  for (std::size_t i = 0; i < grads.size(); ++i) {
    if (grads[i].shape() != params[i].value.shape()) {
      fail(ErrorKind::kDimension, "adamw_step: gradient shape mismatch for " + params[i].name);
    }
    if (!grads[i].all_finite()) {
      fail(ErrorKind::kNumeric, "non-finite gradient for parameter " + params[i].name);
    }
  }
  const AdamWConfig& c = optim.config;
  ++optim.step;
  const double t = static_cast<double>(optim.step);
  const double bc1 = 1.0 - std::pow(c.beta1, t);
  const double bc2 = 1.0 - std::pow(c.beta2, t);
  for (std::size_t i = 0; i < grads.size(); ++i) {
    Tensor& w = params[i].value;
    Tensor& m = optim.m[i];
    Tensor& v = optim.v[i];
    const double decay = params[i].decay ? c.lr * c.weight_decay : 0.0;
    for (std::size_t k = 0; k < w.size(); ++k) {
      const double g = grads[i][k];
      m[k] = c.beta1 * m[k] + (1.0 - c.beta1) * g;
      v[k] = c.beta2 * v[k] + (1.0 - c.beta2) * g * g;
      const double mhat = m[k] / bc1;
      const double vhat = v[k] / bc2;
      w[k] -= decay * w[k];
      w[k] -= c.lr * mhat / (std::sqrt(vhat) + c.epsilon);
    }
  }
}

// ---- training --------------------------------------------------------------------------

std::string step_log_json(const StepLog& l) {
  json j = {{"step", l.step},
            {"total", l.total},
            {"ssl", l.ssl},
            {"reg", l.reg},
            {"beta", l.beta},
            {"lr", l.lr},
            {"kl_per_dim", l.kl_per_dim},
            {"expected_l0", l.expected_l0},
            {"positive_similarity", l.positive_similarity}};
  return j.dump();
}

TrialKeys trial_keys(const ExperimentConfig& cfg, std::size_t trial) {
  TrialKeys k;
  const RngKey experiment = derive_key(cfg.trials.base_seed, "adassl-experiment");
  k.root = derive_key(experiment, static_cast<std::uint64_t>(trial));
  k.dgp = cfg.dgp.seed_policy == SeedPolicy::kShared ? derive_key(experiment, "dgp")
                                                    : derive_key(k.root, "dgp");
  k.init = derive_key(k.root, "init");
  k.batches = derive_key(k.root, "batches");
  k.loss = derive_key(k.root, "loss");
  k.eval = derive_key(k.root, "eval");
  return k;
}

PairBatch training_batch(const DgpParams& dgp, std::size_t batch, RngKey key,
                         LatentBatch* latents_out) {
  LatentBatch lat = sample_latents(dgp, batch, key);
  PairBatch pairs = mix(lat, dgp.mixing);
  if (latents_out) *latents_out = std::move(lat);
  return pairs;
}

namespace {

// Each step allocates and frees the same set of large tape buffers; keeping
// them on the heap instead of round-tripping through mmap removes most of the
// page-fault cost.
void tune_allocator() {
#if defined(__GLIBC__)
  static const bool once = [] {
    mallopt(M_MMAP_THRESHOLD, 32 * 1024 * 1024);
    mallopt(M_TRIM_THRESHOLD, 512 * 1024 * 1024);
    return true;
  }();
  (void)once;
#endif
}

// Late in training the softmax tails underflow into subnormals, and every
// matmul touching them takes the slow microcode path (about 2x per step).
// Flush them to zero for the duration of a run and restore the caller's mode.
class FlushSubnormals {
 public:
#if defined(__SSE__)
  FlushSubnormals() : saved_(_mm_getcsr()) { _mm_setcsr(saved_ | kFtz | kDaz); }
  ~FlushSubnormals() { _mm_setcsr(saved_); }

 private:
  static constexpr unsigned kFtz = 0x8000;
  static constexpr unsigned kDaz = 0x0040;
  unsigned saved_;
#endif
};

Precision precision_of(const ExperimentConfig& cfg) {
  return cfg.io.float_width == 32 ? Precision::kFloat32 : Precision::kFloat64;
}

}  // namespace

TrainResult train(const ExperimentConfig& cfg, std::size_t trial, const TrainHooks& hooks) {
  validate(cfg);
  tune_allocator();
  const FlushSubnormals flush;
  const TrialKeys keys = trial_keys(cfg, trial);
  const LossConfig lcfg = loss_config(cfg);
  TrainResult result;
  result.dgp = make_dgp(dgp_config(cfg), keys.dgp);
  result.bundle = make_bundle(model_config(cfg), lcfg.objective, lcfg.base, keys.init);
  ModelBundle& bundle = result.bundle;
  const Precision precision = precision_of(cfg);
  if (precision == Precision::kFloat32) {
    for (auto& p : bundle.params.all()) p.value.round_to(precision);
    ema_sync(bundle);
  }
  OptimState optim = OptimState::make(
      bundle.params, AdamWConfig{cfg.train.lr, cfg.train.weight_decay, 0.9, 0.999, 1e-8});

  const std::size_t window = std::min<std::size_t>(1000, cfg.train.steps);
  double tail_sum = 0.0;
  for (std::size_t step = 0; step < cfg.train.steps; ++step) {
    const PairBatch batch = training_batch(result.dgp, cfg.train.batch,
                                           derive_key(keys.batches, step));
    Tape tape(precision);
    Forward fw(bundle, tape, ForwardOptions{true, true, true});
    LossOutput out;
    try {
      out = compute_loss(fw, batch, lcfg, step, derive_key(keys.loss, step));
      if (!std::isfinite(out.total.value().item())) {
        fail(ErrorKind::kNumeric, "non-finite loss at step " + std::to_string(step));
      }
      tape.backward(out.total);
      adamw_step(optim, bundle.params, fw.gradients());
    } catch (const Error& e) {
      // A collapsed embedding mid-run is divergence, not bad input.
      const bool diverged = e.kind() == ErrorKind::kNumeric ||
                            (step > 0 && e.kind() == ErrorKind::kDegenerateInput);
      if (!diverged) throw;
      result.aborted = true;
      result.abort_reason = std::string(error_kind_name(e.kind())) + ": " + e.what();
      // Parameters are updated only after every check passed, so the bundle
      // still holds the last good state.
      if (!hooks.abort_checkpoint_path.empty()) {
        save_checkpoint(bundle, hooks.abort_checkpoint_path);
      }
      break;
    }
    if (precision == Precision::kFloat32) {
      for (auto& p : bundle.params.all()) p.value.round_to(precision);
    }
    if (bundle.uses_ema()) ema_update(bundle, cfg.train.ema_momentum);
    result.steps_done = step + 1;

    const double total = out.total.value().item();
    if (step + window >= cfg.train.steps) tail_sum += total;
    if (step % cfg.train.log_every == 0 || step + 1 == cfg.train.steps) {
      StepLog log;
      log.step = step;
      log.total = total;
      log.ssl = out.ssl.value().item();
      log.reg = out.reg.value().item();
      log.beta = out.beta;
      log.lr = cfg.train.lr;
      log.kl_per_dim = out.diagnostics.kl_per_dim;
      log.expected_l0 = out.diagnostics.expected_l0;
      log.positive_similarity = out.diagnostics.positive_similarity;
      result.trace.push_back(log);
      if (hooks.on_log) hooks.on_log(log);
    }
  }
  if (!result.aborted && window > 0) result.final_loss = tail_sum / static_cast<double>(window);
  return result;
}

// ---- evaluation ------------------------------------------------------------------------

Tensor embed(ModelBundle& bundle, const Tensor& x) {
  constexpr std::size_t kChunk = 4096;
  const std::size_t n = x.rows(), d_in = x.cols();
  const std::size_t df = bundle.config.embedding_dim();
  Tensor out(Shape{n, df});
  for (std::size_t begin = 0; begin < n; begin += kChunk) {
    const std::size_t rows = std::min(kChunk, n - begin);
    Tensor chunk(Shape{rows, d_in});
    std::copy(x.data() + begin * d_in, x.data() + (begin + rows) * d_in, chunk.data());
    Tape tape;
    Forward fw(bundle, tape, ForwardOptions{false, false, false});
    const Tensor& psi = encode(fw, chunk).psi.value();
    std::copy(psi.data(), psi.data() + psi.size(), out.data() + begin * df);
  }
  return out;
}

Eigen::MatrixXd LinearProbe::predict(const Eigen::MatrixXd& x) const {
  return (x * weights).rowwise() + intercept;
}

LinearProbe fit_linear_probe(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y,
                             double ridge_eps) {
  if (x.rows() != y.rows()) fail(ErrorKind::kDimension, "probe: row count mismatch");
  if (x.rows() <= x.cols()) {
    fail(ErrorKind::kUnderdetermined, "probe: need more samples (" + std::to_string(x.rows()) +
                                          ") than features (" + std::to_string(x.cols()) + ")");
  }
  if (!x.allFinite() || !y.allFinite()) fail(ErrorKind::kNumeric, "probe: non-finite input");
  const Eigen::RowVectorXd x_mean = x.colwise().mean();
  const Eigen::RowVectorXd y_mean = y.colwise().mean();
  const Eigen::MatrixXd xc = x.rowwise() - x_mean;
  const Eigen::MatrixXd yc = y.rowwise() - y_mean;
  Eigen::BDCSVD<Eigen::MatrixXd> svd(xc, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Eigen::VectorXd s = svd.singularValues();
  Eigen::VectorXd inv(s.size());
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    const double denom = s(i) * s(i) + ridge_eps;
    inv(i) = denom > 0.0 ? s(i) / denom : 0.0;
  }
  LinearProbe p;
  p.weights = svd.matrixV() * inv.asDiagonal() * (svd.matrixU().transpose() * yc);
  p.intercept = y_mean - x_mean * p.weights;
  return p;
}

std::vector<double> r_squared_per_dim(const Eigen::MatrixXd& y, const Eigen::MatrixXd& y_hat) {
  if (y.rows() != y_hat.rows() || y.cols() != y_hat.cols()) {
    fail(ErrorKind::kDimension, "r_squared: shape mismatch");
  }
  std::vector<double> out;
  for (Eigen::Index k = 0; k < y.cols(); ++k) {
    const double mean = y.col(k).mean();
    const double ss_tot = (y.col(k).array() - mean).square().sum();
    const double ss_res = (y.col(k) - y_hat.col(k)).squaredNorm();
    if (ss_tot <= 0.0) fail(ErrorKind::kDegenerateInput, "r_squared: constant target column");
    out.push_back(1.0 - ss_res / ss_tot);
  }
  return out;
}

double r_squared(const Eigen::MatrixXd& y, const Eigen::MatrixXd& y_hat) {
  const auto per = r_squared_per_dim(y, y_hat);
  double acc = 0.0;
  for (double v : per) acc += v;
  return acc / static_cast<double>(per.size());
}

namespace {

struct ProbeData {
  Eigen::MatrixXd features;
  Eigen::MatrixXd content;
};

ProbeData probe_data(const Embedder& embedder, const DgpParams& dgp, EvalKind kind,
                     std::size_t n, RngKey key) {
  LatentBatch lat = eval_distribution(dgp, kind, n, key);
  const Tensor x = dgp.mixing.apply(lat.z());
  return {to_eigen(embedder(x)), to_eigen(lat.c)};
}

}  // namespace

std::vector<RegimeScore> evaluate_regimes(const Embedder& embedder, const DgpParams& dgp,
                                          const ExperimentConfig::Eval& eval, RngKey key) {
  std::vector<RegimeScore> scores;
  for (ProbeRegime regime : eval.regimes) {
    const RngKey rk = derive_key(key, probe_regime_name(regime));
    const EvalKind fit_kind = regime == ProbeRegime::kWide ? EvalKind::kWide : EvalKind::kTrain;
    const EvalKind test_kind = regime == ProbeRegime::kPz ? EvalKind::kTrain : EvalKind::kWide;
    const ProbeData fit = probe_data(embedder, dgp, fit_kind, eval.probe_train,
                                     derive_key(rk, "fit"));
    const ProbeData test = probe_data(embedder, dgp, test_kind, eval.probe_test,
                                      derive_key(rk, "test"));
    const LinearProbe probe = fit_linear_probe(fit.features, fit.content, eval.ridge_eps);
    RegimeScore s;
    s.regime = regime;
    s.r2_train = r_squared(fit.content, probe.predict(fit.features));
    s.r2_test = r_squared(test.content, probe.predict(test.features));
    scores.push_back(s);
  }
  return scores;
}

Eigen::VectorXd lasso(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, double lambda,
                      std::size_t max_iter, double tol) {
  const Eigen::Index n = x.rows(), d = x.cols();
  Eigen::VectorXd w = Eigen::VectorXd::Zero(d);
  Eigen::VectorXd col_sq(d);
  for (Eigen::Index j = 0; j < d; ++j) col_sq(j) = x.col(j).squaredNorm() / static_cast<double>(n);
  Eigen::VectorXd residual = y;
  for (std::size_t it = 0; it < max_iter; ++it) {
    double max_delta = 0.0, max_w = 0.0;
    for (Eigen::Index j = 0; j < d; ++j) {
      if (col_sq(j) == 0.0) continue;
      const double old = w(j);
      const double rho = x.col(j).dot(residual) / static_cast<double>(n) + col_sq(j) * old;
      const double shrunk = std::copysign(std::max(std::abs(rho) - lambda, 0.0), rho);
      const double updated = shrunk / col_sq(j);
      if (updated != old) {
        residual -= (updated - old) * x.col(j);
        w(j) = updated;
      }
      max_delta = std::max(max_delta, std::abs(updated - old));
      max_w = std::max(max_w, std::abs(updated));
    }
    if (max_delta <= tol * std::max(max_w, 1.0)) break;
  }
  return w;
}

namespace {

Eigen::MatrixXd standardize(const Eigen::MatrixXd& m) {
  Eigen::MatrixXd out = m.rowwise() - m.colwise().mean();
  for (Eigen::Index j = 0; j < out.cols(); ++j) {
    const double sd = std::sqrt(out.col(j).squaredNorm() / static_cast<double>(out.rows()));
    if (sd > 0.0) out.col(j) /= sd;
  }
  return out;
}

}  // namespace

Eigen::MatrixXd dci_importance(const Eigen::MatrixXd& embeddings, const Eigen::MatrixXd& factors,
                               double lambda) {
  if (embeddings.rows() != factors.rows()) {
    fail(ErrorKind::kDimension, "dci: embeddings and factors disagree on sample count");
  }
  if (!embeddings.allFinite() || !factors.allFinite()) {
    fail(ErrorKind::kNumeric, "dci: non-finite input");
  }
  const Eigen::MatrixXd x = standardize(embeddings);
  const Eigen::MatrixXd y = standardize(factors);
  Eigen::MatrixXd importance(embeddings.cols(), factors.cols());
  for (Eigen::Index k = 0; k < factors.cols(); ++k) {
    importance.col(k) = lasso(x, y.col(k), lambda).cwiseAbs();
  }
  return importance;
}

double dci_from_importance(const Eigen::MatrixXd& r) {
  const Eigen::Index k = r.cols();
  const double total = r.sum();
  if (!(total > 0.0)) return 0.0;
  double score = 0.0;
  for (Eigen::Index j = 0; j < r.rows(); ++j) {
    const double row = r.row(j).sum();
    if (row <= 0.0) continue;
    double entropy = 0.0;
    for (Eigen::Index f = 0; f < k; ++f) {
      const double p = r(j, f) / row;
      if (p > 0.0) entropy -= p * std::log(p);
    }
    const double normalized = k > 1 ? entropy / std::log(static_cast<double>(k)) : 0.0;
    score += (row / total) * (1.0 - normalized);
  }
  return score;
}

double dci_disentanglement(const Eigen::MatrixXd& embeddings, const Eigen::MatrixXd& factors,
                           double lambda) {
  return dci_from_importance(dci_importance(embeddings, factors, lambda));
}

namespace {

// Embeddings that the model would compare against psi(x+): the raw psi for the
// InfoNCE family, the mean predictor output for H-InfoNCE, and edited
// embeddings for AdaSSL-V (posterior edits when `pair` is given, prior
// samples otherwise).
Tensor predictive_embedding(ModelBundle& b, const Tensor& x, const Tensor* pair, RngKey key) {
  Tape tape;
  Forward fw(b, tape, ForwardOptions{false, false, false});
  Embedding a = encode(fw, x);
  auto project = [&](const Var& raw) {
    return b.config.space == ModelSpace::kHypersphere ? l2_normalize(raw) : raw;
  };
  if (b.mean_predictor) return project(mlp_forward(fw, *b.mean_predictor, a.raw)).value();
  if (b.objective == Objective::kAdasslV) {
    Var f_pair = pair ? encode(fw, *pair).raw : Var{};
    VariationalSample vs = sample_r_variational(
        fw, a.raw, f_pair, pair ? RMode::kPosterior : RMode::kPrior, key);
    return project(edit(fw, *b.editor, a.raw, vs.r)).value();
  }
  return a.psi.value();
}

}  // namespace

namespace {

void write_density_csv(const std::string& path, const char* model, const Eigen::MatrixXd& z,
                       const Eigen::MatrixXd& zpos_hat, const Eigen::MatrixXd& zpos) {
  std::ofstream os(path);
  if (!os) fail(ErrorKind::kIo, "cannot open density export '" + path + "'");
  const Eigen::Index d = z.cols();
  os << "model";
  for (Eigen::Index j = 0; j < d; ++j) os << ",z_" << j;
  for (Eigen::Index j = 0; j < d; ++j) os << ",zpos_hat_" << j;
  for (Eigen::Index j = 0; j < d; ++j) os << ",zpos_true_" << j;
  os << '\n';
  char buf[40];
  auto put = [&](double v) {
    std::snprintf(buf, sizeof(buf), ",%.17g", v);
    os << buf;
  };
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    os << model;
    for (Eigen::Index j = 0; j < d; ++j) put(z(i, j));
    for (Eigen::Index j = 0; j < d; ++j) put(zpos_hat(i, j));
    for (Eigen::Index j = 0; j < d; ++j) put(zpos(i, j));
    os << '\n';
  }
  if (!os) fail(ErrorKind::kIo, "failed writing density export '" + path + "'");
}

}  // namespace

std::vector<double> density_export(ModelBundle& bundle, const DgpParams& dgp, std::size_t n,
                                   const std::string& path, RngKey key,
                                   std::size_t fit_samples) {
  // Projection from (edited) embedding space to z+, fitted on training pairs.
  LatentBatch fit_lat;
  const PairBatch fit_pairs = training_batch(dgp, fit_samples, derive_key(key, "fit"), &fit_lat);
  const bool v_model = bundle.objective == Objective::kAdasslV;
  const Tensor fit_emb = predictive_embedding(bundle, fit_pairs.x,
                                              v_model ? &fit_pairs.x_pos : nullptr,
                                              derive_key(key, "fit_r"));
  const LinearProbe proj = fit_linear_probe(to_eigen(fit_emb), to_eigen(fit_lat.z_pos()));

  LatentBatch lat;
  const PairBatch pairs = training_batch(dgp, n, derive_key(key, "samples"), &lat);
  const Tensor emb = predictive_embedding(bundle, pairs.x, nullptr, derive_key(key, "prior_r"));
  const Eigen::MatrixXd zpos_hat = proj.predict(to_eigen(emb));
  const Eigen::MatrixXd z = to_eigen(lat.z());
  const Eigen::MatrixXd zpos = to_eigen(lat.z_pos());

  const Eigen::Index d = z.cols();
  if (!path.empty()) write_density_csv(path, objective_name(bundle.objective), z, zpos_hat, zpos);

  std::vector<double> var(static_cast<std::size_t>(d));
  for (Eigen::Index j = 0; j < d; ++j) {
    const double m = zpos_hat.col(j).mean();
    var[j] = (zpos_hat.col(j).array() - m).square().mean();
  }
  return var;
}

// ---- reports ---------------------------------------------------------------------------

namespace {

json trace_json(const std::vector<StepLog>& trace) {
  json arr = json::array();
  for (const auto& l : trace) arr.push_back(json::parse(step_log_json(l)));
  return arr;
}

}  // namespace

std::string report_json(const EvalReport& r) {
  json scores = json::array();
  for (const auto& s : r.scores) {
    scores.push_back({{"regime", probe_regime_name(s.regime)},
                      {"r2_train", s.r2_train},
                      {"r2_test", s.r2_test}});
  }
  json j = {{"model", r.model},
            {"trial", r.trial},
            {"seed", r.seed},
            {"completed", r.completed},
            {"failure", r.failure},
            {"scores", scores},
            {"dci", r.dci},
            {"final_loss", r.final_loss},
            {"expected_l0", r.expected_l0},
            {"heteroscedasticity_ratio", r.heteroscedasticity_ratio},
            {"trace", trace_json(r.trace)},
            {"density_path", r.density_path},
            {"version", kVersionString}};
  return j.dump(2) + "\n";
}

EvalReport report_from_json(const std::string& text) {
  const json j = json::parse(text);
  EvalReport r;
  r.model = j.at("model").get<std::string>();
  r.trial = j.at("trial").get<std::size_t>();
  r.seed = j.at("seed").get<std::uint64_t>();
  r.completed = j.at("completed").get<bool>();
  r.failure = j.at("failure").get<std::string>();
  for (const auto& s : j.at("scores")) {
    r.scores.push_back({parse_probe_regime(s.at("regime").get<std::string>()),
                        s.at("r2_train").get<double>(), s.at("r2_test").get<double>()});
  }
  r.dci = j.at("dci").get<double>();
  r.final_loss = j.at("final_loss").get<double>();
  r.expected_l0 = j.at("expected_l0").get<double>();
  r.heteroscedasticity_ratio = j.at("heteroscedasticity_ratio").get<double>();
  for (const auto& l : j.at("trace")) {
    StepLog s;
    s.step = l.at("step").get<std::size_t>();
    s.total = l.at("total").get<double>();
    s.ssl = l.at("ssl").get<double>();
    s.reg = l.at("reg").get<double>();
    s.beta = l.at("beta").get<double>();
    s.lr = l.at("lr").get<double>();
    s.kl_per_dim = l.at("kl_per_dim").get<double>();
    s.expected_l0 = l.at("expected_l0").get<double>();
    s.positive_similarity = l.at("positive_similarity").get<double>();
    r.trace.push_back(s);
  }
  r.density_path = j.at("density_path").get<std::string>();
  return r;
}

// ---- trials ----------------------------------------------------------------------------

namespace {

// Covariance of a unit content perturbation pushed through psi o g at
// samples from p(z).
double learned_heteroscedasticity(ModelBundle& bundle, const DgpParams& dgp, std::size_t n,
                                  RngKey key) {
  if (n == 0) return 0.0;
  LatentBatch lat = eval_distribution(dgp, EvalKind::kTrain, n, key);
  const Tensor z = lat.z();
  std::vector<Eigen::VectorXd> samples;
  for (std::size_t i = 0; i < n; ++i) {
    Eigen::VectorXd v(z.cols());
    for (std::size_t j = 0; j < z.cols(); ++j) v(j) = z.at(i, j);
    samples.push_back(v);
  }
  const Eigen::Index d = static_cast<Eigen::Index>(dgp.n());
  Eigen::MatrixXd sigma = Eigen::MatrixXd::Zero(d, d);
  sigma.topLeftCorner(dgp.n_c, dgp.n_c).setIdentity();
  VectorMap h = [&](const Eigen::VectorXd& v) {
    Tensor row(Shape{1, static_cast<std::size_t>(v.size())});
    for (Eigen::Index j = 0; j < v.size(); ++j) row[j] = v(j);
    const Tensor e = embed(bundle, dgp.mixing.apply(row));
    Eigen::VectorXd out(e.size());
    for (std::size_t j = 0; j < e.size(); ++j) out(j) = e[j];
    return out;
  };
  const auto report = heteroscedasticity_probe(h, samples, sigma);
  return report.frobenius_ratio;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream os(path);
  if (!os) fail(ErrorKind::kIo, "cannot write '" + path.string() + "'");
  os << text;
  if (!os) fail(ErrorKind::kIo, "failed writing '" + path.string() + "'");
}

}  // namespace

EvalReport run_trial(const ExperimentConfig& cfg, std::size_t trial, const std::string& trial_dir) {
  EvalReport report;
  report.model = objective_name(cfg.loss.objective);
  report.trial = trial;
  const TrialKeys keys = trial_keys(cfg, trial);
  report.seed = keys.root;

  std::ofstream log_stream;
  TrainHooks hooks;
  if (!trial_dir.empty()) {
    fs::create_directories(trial_dir);
    log_stream.open(fs::path(trial_dir) / "log.jsonl");
    if (!log_stream) fail(ErrorKind::kIo, "cannot write step log in '" + trial_dir + "'");
    hooks.on_log = [&](const StepLog& l) { log_stream << step_log_json(l) << '\n'; };
    hooks.abort_checkpoint_path = (fs::path(trial_dir) / "last_good.ckpt").string();
  }
  TrainResult tr = train(cfg, trial, hooks);
  report.trace = tr.trace;
  report.final_loss = tr.final_loss;
  if (tr.aborted) {
    report.failure = tr.abort_reason;
    return report;
  }
  // The sparsity diagnostic is averaged over the last tenth of the logged steps.
  if (!tr.trace.empty()) {
    const std::size_t tail = std::max<std::size_t>(1, tr.trace.size() / 10);
    double acc = 0.0;
    for (std::size_t i = tr.trace.size() - tail; i < tr.trace.size(); ++i) {
      acc += tr.trace[i].expected_l0;
    }
    report.expected_l0 = acc / static_cast<double>(tail);
  }

  ModelBundle& bundle = tr.bundle;
  Embedder embedder = [&](const Tensor& x) { return embed(bundle, x); };
  report.scores = evaluate_regimes(embedder, tr.dgp, cfg.eval, derive_key(keys.eval, "probe"));

  LatentBatch dci_lat = eval_distribution(tr.dgp, EvalKind::kTrain, cfg.eval.dci_samples,
                                          derive_key(keys.eval, "dci"));
  const Tensor dci_emb = embed(bundle, tr.dgp.mixing.apply(dci_lat.z()));
  report.dci = dci_disentanglement(to_eigen(dci_emb), to_eigen(dci_lat.c), cfg.eval.dci_lambda);
  report.heteroscedasticity_ratio = learned_heteroscedasticity(
      bundle, tr.dgp, cfg.eval.hetero_samples, derive_key(keys.eval, "hetero"));

  if (!trial_dir.empty()) {
    if (cfg.io.checkpoints) save_checkpoint(bundle, (fs::path(trial_dir) / "model.ckpt").string());
    if (cfg.eval.density_n > 0) {
      report.density_path = (fs::path(trial_dir) / "density.csv").string();
      density_export(bundle, tr.dgp, cfg.eval.density_n, report.density_path,
                     derive_key(keys.eval, "density"));
    }
  }
  report.completed = true;
  return report;
}

double checkpoint_dci(const ExperimentConfig& cfg, std::size_t trial,
                      const std::string& checkpoint_path, double lambda) {
  validate(cfg);
  if (!(lambda > 0.0)) fail(ErrorKind::kDomain, "DCI lasso penalty must be positive");
  const TrialKeys keys = trial_keys(cfg, trial);
  const LossConfig lcfg = loss_config(cfg);
  const DgpParams dgp = make_dgp(dgp_config(cfg), keys.dgp);
  ModelBundle bundle = make_bundle(model_config(cfg), lcfg.objective, lcfg.base, keys.init);
  load_checkpoint(bundle, checkpoint_path);
  // Same evaluation draw as run_trial, so only the penalty differs.
  LatentBatch lat = eval_distribution(dgp, EvalKind::kTrain, cfg.eval.dci_samples,
                                      derive_key(keys.eval, "dci"));
  const Tensor emb = embed(bundle, dgp.mixing.apply(lat.z()));
  return dci_disentanglement(to_eigen(emb), to_eigen(lat.c), lambda);
}

EvalReport identity_trial(const ExperimentConfig& cfg, std::size_t trial) {
  EvalReport report;
  report.model = "identity";
  report.trial = trial;
  const TrialKeys keys = trial_keys(cfg, trial);
  report.seed = keys.root;
  const DgpParams dgp = make_dgp(dgp_config(cfg), keys.dgp);
  Embedder embedder = [](const Tensor& x) { return x; };
  report.scores = evaluate_regimes(embedder, dgp, cfg.eval, derive_key(keys.eval, "probe"));
  LatentBatch lat = eval_distribution(dgp, EvalKind::kTrain, cfg.eval.dci_samples,
                                      derive_key(keys.eval, "dci"));
  report.dci = dci_disentanglement(to_eigen(dgp.mixing.apply(lat.z())), to_eigen(lat.c),
                                   cfg.eval.dci_lambda);
  report.completed = true;
  return report;
}

std::vector<AggregateRow> aggregate(const std::vector<EvalReport>& reports) {
  // Keyed by (model, regime, metric) in first-seen order.
  std::vector<std::tuple<std::string, std::string, std::string>> order;
  std::map<std::tuple<std::string, std::string, std::string>, std::vector<double>> values;
  auto push = [&](const std::string& model, const std::string& regime, const std::string& metric,
                  double v) {
    auto key = std::make_tuple(model, regime, metric);
    if (!values.count(key)) order.push_back(key);
    values[key].push_back(v);
  };
  for (const auto& r : reports) {
    if (!r.completed) continue;
    for (const auto& s : r.scores) {
      push(r.model, probe_regime_name(s.regime), "r2", s.r2_test);
      push(r.model, probe_regime_name(s.regime), "r2_train", s.r2_train);
    }
    push(r.model, "pz", "dci", r.dci);
    if (r.model != "identity") {
      push(r.model, "train", "final_loss", r.final_loss);
      if (r.model == "adassl_s") push(r.model, "train", "expected_l0", r.expected_l0);
    }
  }
  std::vector<AggregateRow> rows;
  for (const auto& key : order) {
    const auto& v = values[key];
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    double var = 0.0;
    for (double x : v) var += (x - mean) * (x - mean);
    var /= static_cast<double>(v.size());
    rows.push_back({std::get<0>(key), std::get<1>(key), std::get<2>(key), mean, std::sqrt(var),
                    v.size()});
  }
  return rows;
}

std::string results_csv(const std::vector<AggregateRow>& rows) {
  std::ostringstream os;
  os << "model,regime,metric,mean,std,n_seeds\n";
  char buf[128];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof(buf), "%.10f,%.10f,%zu", r.mean, r.std, r.n_seeds);
    os << r.model << ',' << r.regime << ',' << r.metric << ',' << buf << '\n';
  }
  return os.str();
}

TrialSetResult run_trials(const ExperimentConfig& cfg, const std::string& run_dir,
                          bool include_identity) {
  validate(cfg);
  TrialSetResult result;
  const fs::path dir(run_dir);
  fs::create_directories(dir);
  write_text(dir / "config.json", to_json(cfg));
  write_text(dir / "VERSION", std::string(kVersionString) + "\n");
  json failures = json::array();
  for (std::size_t t = 0; t < cfg.trials.n_seeds; ++t) {
    const fs::path tdir = dir / ("trial_" + std::to_string(t));
    EvalReport r;
    try {
      r = run_trial(cfg, t, tdir.string());
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::kNumeric) throw;
      r.model = objective_name(cfg.loss.objective);
      r.trial = t;
      r.failure = e.what();
    }
    write_text(tdir / "report.json", report_json(r));
    if (!r.completed) {
      result.complete = false;
      failures.push_back({{"trial", t}, {"reason", r.failure}});
    }
    result.reports.push_back(std::move(r));
    if (include_identity) {
      EvalReport id = identity_trial(cfg, t);
      write_text(tdir / "identity_report.json", report_json(id));
      result.reports.push_back(std::move(id));
    }
  }
  result.rows = aggregate(result.reports);
  write_text(dir / "results.csv", results_csv(result.rows));
  if (!failures.empty()) write_text(dir / "failures.json", failures.dump(2) + "\n");
  return result;
}

}  // namespace adassl
