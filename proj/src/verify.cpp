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

#include "adassl/verify.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <sstream>

#include <json.hpp>

#include "adassl/config.hpp"
#include "adassl/dgp.hpp"
#include "adassl/error.hpp"
#include "adassl/gradcheck.hpp"
#include "adassl/losses.hpp"
#include "adassl/models.hpp"
#include "adassl/train_eval.hpp"

namespace adassl {

namespace {

using Clock = std::chrono::steady_clock;

// Every random input of the suite hangs off this key.
const RngKey kVerifyRoot = derive_key(0, "verify");

RngKey vkey(const char* label) { return derive_key(kVerifyRoot, label); }

std::string fmt(const char* f, double a, double b = 0.0, double c = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), f, a, b, c);
  return buf;
}

struct Check {
  const char* group;
  const char* name;
  std::function<CheckResult()> run;
};

CheckResult outcome(bool passed, std::string detail) {
  CheckResult r;
  r.passed = passed;
  r.detail = std::move(detail);
  return r;
}

CheckResult grad_outcome(const GradCheckResult& g, double tol) {
  const TensorCheck* w = g.worst();
  std::string detail = fmt("max rel err %.3g (tol %.0e)", g.max_rel_error(), tol);
  if (w) detail += ", worst " + w->name;
  return outcome(g.passed(tol), detail);
}

// ---- op-level gradient checks ------------------------------------------------------------

struct OpCheck {
  const char* name;
  std::vector<Tensor> inputs;
  ScalarFn f;
  double tol;
};

// Contracts a tensor output to a scalar with fixed random weights so every
// output element contributes a distinct sensitivity.
Var contract(const Var& y, RngKey key) {
  Tensor w = gaussian_tensor(y.value().shape().empty() ? Shape{1} : y.value().shape(), key);
  if (y.value().shape().empty()) return scale(y, w[0]);
  return sum(mul(y, y.tape()->constant(std::move(w))));
}

Tensor positive(Tensor t, double offset) {
  for (double& v : t.values()) v = std::abs(v) + offset;
  return t;
}

std::vector<OpCheck> op_checks() {
  auto g = [](Shape s, const char* label) { return gaussian_tensor(std::move(s), vkey(label)); };
  auto unary_check = [&](const char* name, UnaryOp op, Tensor in, double param = 0.0) {
    return OpCheck{name, {std::move(in)},
                   [op, param, name](const std::vector<Var>& v) {
                     return contract(unary(op, v[0], param), vkey(name));
                   },
                   1e-6};
  };
  std::vector<OpCheck> checks;
  checks.push_back({"matmul", {g({5, 4}, "mm.a"), g({4, 3}, "mm.b")},
                    [](const std::vector<Var>& v) {
                      return contract(matmul(v[0], v[1]), vkey("mm.w"));
                    },
                    1e-6});
  checks.push_back({"l2_normalize", {g({3, 8}, "l2.x")},
                    [](const std::vector<Var>& v) {
                      return contract(l2_normalize(v[0]), vkey("l2.w"));
                    },
                    1e-6});
  checks.push_back({"batch_norm", {g({16, 4}, "bn.x"), positive(g({1, 4}, "bn.g"), 0.5),
                                   g({1, 4}, "bn.b")},
                    [](const std::vector<Var>& v) {
                      BatchNormState state = BatchNormState::make(4);
                      return contract(batch_norm(v[0], v[1], v[2], state, {true, false}),
                                      vkey("bn.w"));
                    },
                    1e-5});
  checks.push_back(unary_check("softplus", UnaryOp::kSoftplus, g({4, 5}, "sp.x")));
  checks.push_back(unary_check("exp", UnaryOp::kExp, g({4, 5}, "exp.x")));
  checks.push_back(unary_check("log", UnaryOp::kLog, positive(g({4, 5}, "log.x"), 0.2)));
  checks.push_back(unary_check("tanh", UnaryOp::kTanh, g({4, 5}, "tanh.x")));
  checks.push_back(unary_check("sigmoid", UnaryOp::kSigmoid, g({4, 5}, "sig.x")));
  checks.push_back(unary_check("leaky_relu", UnaryOp::kLeakyRelu, g({4, 5}, "lr.x"), 0.01));
  checks.push_back(unary_check("square", UnaryOp::kSquare, g({4, 5}, "sq.x")));
  checks.push_back(unary_check("sqrt", UnaryOp::kSqrt, positive(g({4, 5}, "sqrt.x"), 0.2)));
  checks.push_back({"broadcast_arith", {g({4, 3}, "ba.a"), positive(g({1, 3}, "ba.b"), 0.5),
                                        g({4, 1}, "ba.c")},
                    [](const std::vector<Var>& v) {
                      Var y = div(mul(add(v[0], v[2]), v[1]), add_scalar(v[1], 1.0));
                      return contract(sub(y, v[2]), vkey("ba.w"));
                    },
                    1e-6});
  checks.push_back({"reductions", {g({4, 6}, "red.x")},
                    [](const std::vector<Var>& v) {
                      Var a = contract(logsumexp(v[0], 1), vkey("red.w1"));
                      Var b = contract(logsumexp(v[0], 0), vkey("red.w2"));
                      Var c = contract(mean(v[0], 0), vkey("red.w3"));
                      Var d = contract(max(v[0], 1), vkey("red.w4"));
                      return add(add(a, b), add(c, d));
                    },
                    1e-6});
  checks.push_back({"structure", {g({4, 4}, "st.a"), g({4, 2}, "st.b")},
                    [](const std::vector<Var>& v) {
                      Var cat = concat_cols({v[0], v[1]});
                      Var sl = slice_cols(cat, 1, 5);
                      Var y = add(transpose(sl), diagonal(v[0]));
                      return contract(clamp(y, -1.5, 1.5), vkey("st.w"));
                    },
                    1e-6});
  checks.push_back({"pairwise_distance", {g({5, 3}, "pd.a"), g({5, 3}, "pd.b"),
                                          positive(g({5, 3}, "pd.w"), 0.3)},
                    [](const std::vector<Var>& v) {
                      return contract(neg_pairwise_sq_distance(v[0], v[1], v[2]), vkey("pd.c"));
                    },
                    1e-6});
  checks.push_back({"infonce", {g({4, 4}, "nce.s")},
                    [](const std::vector<Var>& v) { return infonce(v[0], 0.5, true); }, 1e-6});
  // The target is cut from the graph, so only the prediction is perturbed.
  checks.push_back({"byol_loss", {g({4, 3}, "byol.p")},
                    [](const std::vector<Var>& v) {
                      Var target = v[0].tape()->constant(gaussian_tensor({4, 3}, vkey("byol.t")));
                      return byol_loss(v[0], target);
                    },
                    1e-6});
  checks.push_back({"kl_factorized_gaussians",
                    {g({3, 4}, "kl.mq"), g({3, 4}, "kl.lq"), g({3, 4}, "kl.mp"),
                     g({3, 4}, "kl.lp")},
                    [](const std::vector<Var>& v) {
                      return mean(kl_factorized_gaussians(v[0], v[1], v[2], v[3]));
                    },
                    1e-6});
  checks.push_back({"expected_l0_logits", {g({3, 4}, "l0.logits")},
                    [](const std::vector<Var>& v) { return expected_l0(sigmoid(v[0])); }, 1e-6});
  return checks;
}

// ---- oracle helpers -------------------------------------------------------------------

double normal_logpdf(double x, double mu, double var) {
  return -0.5 * (std::log(2.0 * M_PI * var) + (x - mu) * (x - mu) / var);
}

// Composite Simpson rule for KL(N(mq, vq) || N(mp, vp)) on +-14 sd of q.
double kl_quadrature(double mq, double vq, double mp, double vp) {
  const double sd = std::sqrt(vq);
  const double lo = mq - 14.0 * sd, hi = mq + 14.0 * sd;
  const int n = 40000;
  const double h = (hi - lo) / n;
  double acc = 0.0;
  for (int i = 0; i <= n; ++i) {
    const double x = lo + i * h;
    const double lq = normal_logpdf(x, mq, vq);
    const double f = std::exp(lq) * (lq - normal_logpdf(x, mp, vp));
    acc += f * (i == 0 || i == n ? 1.0 : (i % 2 ? 4.0 : 2.0));
  }
  return acc * h / 3.0;
}

ModelBundle small_bundle(Objective objective, std::size_t input_dim, std::size_t d_r,
                         ModularBias bias = ModularBias::kVector) {
  ModelConfig mc;
  mc.input_dim = input_dim;
  mc.width_multiplier = 2;
  mc.head_width = 8;
  mc.d_r = d_r;
  mc.modular_bias = bias;
  return make_bundle(mc, objective,
                     objective == Objective::kByol ? BaseLoss::kByol : BaseLoss::kInfoNce,
                     vkey("bundle"));
}

Tensor repeat_row(const Tensor& row, std::size_t n) {
  Tensor out(Shape{n, row.cols()});
  for (std::size_t i = 0; i < n; ++i) {
    std::copy(row.data(), row.data() + row.cols(), out.data() + i * row.cols());
  }
  return out;
}

ExperimentConfig desk_config(Objective objective, NoiseRegime regime, std::size_t steps,
                             std::size_t batch) {
  ExperimentConfig c;
  c.dgp.regime = regime;
  c.dgp.mixing_candidates = 1000;
  c.loss.objective = objective;
  c.train.steps = steps;
  c.train.batch = batch;
  c.eval.probe_train = 5000;
  c.eval.probe_test = 5000;
  c.eval.dci_samples = 2000;
  c.eval.hetero_samples = 0;
  c.io.checkpoints = false;
  return with_objective_defaults(c);
}

double total_variance(const std::vector<double>& v) {
  double acc = 0.0;
  for (double x : v) acc += x;
  return acc;
}

// ---- the suite ----------------------------------------------------------------------

std::vector<Check> build_checks() {
  std::vector<Check> checks;

  // Gradient group: ops, then full objective steps.
  for (const auto& op : op_checks()) {
    checks.push_back({"gradient", op.name, [op] {
                        return grad_outcome(check_function(op.f, op.inputs, {}, 1e-6), op.tol);
                      }});
  }
  struct ObjectiveCase {
    const char* name;
    Objective objective;
    NoiseRegime regime;
    BaseLoss base;
  };
  static const ObjectiveCase kObjectives[] = {
      {"step.infonce", Objective::kInfoNce, NoiseRegime::kHeteroscedastic, BaseLoss::kInfoNce},
      {"step.infonce_symmetric", Objective::kInfoNce, NoiseRegime::kComplex, BaseLoss::kInfoNce},
      {"step.aninfonce", Objective::kAnInfoNce, NoiseRegime::kHeteroscedastic,
       BaseLoss::kInfoNce},
      {"step.hinfonce_affine", Objective::kHInfoNceAffine, NoiseRegime::kHeteroscedastic,
       BaseLoss::kInfoNce},
      {"step.hinfonce_mlp", Objective::kHInfoNceMlp, NoiseRegime::kComplex, BaseLoss::kInfoNce},
      {"step.byol", Objective::kByol, NoiseRegime::kHeteroscedastic, BaseLoss::kByol},
      {"step.adassl_v", Objective::kAdasslV, NoiseRegime::kComplex, BaseLoss::kInfoNce},
      {"step.adassl_v_byol", Objective::kAdasslV, NoiseRegime::kHeteroscedastic,
       BaseLoss::kByol},
      {"step.adassl_s", Objective::kAdasslS, NoiseRegime::kComplex, BaseLoss::kInfoNce},
      {"step.adassl_s_byol", Objective::kAdasslS, NoiseRegime::kHeteroscedastic,
       BaseLoss::kByol},
  };
  for (const auto& oc : kObjectives) {
    checks.push_back({"gradient", oc.name, [oc] {
                        ExperimentConfig cfg = gradcheck_config(oc.objective, oc.regime);
                        cfg.loss.base = oc.base;
                        return grad_outcome(check_objective(cfg, vkey(oc.name)), 1e-4);
                      }});
  }

  // Oracle group.
  checks.push_back({"oracle", "softplus_large_argument", [] {
                      const double err = std::abs(softplus_value(50.0) - 50.0);
                      // log1p(exp(-50)) ~ 1.9e-22 is far below 1e-12.
                      return outcome(err < 1e-12, fmt("|softplus(50) - 50| = %.3g", err));
                    }});
  checks.push_back({"oracle", "inverse_wishart_mean", [] {
                      RngStream rng(vkey("inverse_wishart"));
                      const std::size_t p = 5, draws = 50000;
                      Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(p, p);
                      for (std::size_t i = 0; i < draws; ++i) {
                        acc += sample_inverse_wishart(p, p + 2.0, rng);
                      }
                      acc /= static_cast<double>(draws);
                      // Analytic mean Psi / (df - p - 1) with Psi = I and df = p + 2.
                      const Eigen::MatrixXd analytic =
                          Eigen::MatrixXd::Identity(p, p) / (p + 2.0 - p - 1.0);
                      const double dev = (acc - analytic).cwiseAbs().maxCoeff();
                      return outcome(dev < 0.05,
                                     fmt("max entrywise |mean - I| = %.4f over 50k draws", dev));
                    }});
  checks.push_back({"oracle", "inverse_wishart_mean_finite_variance", [] {
                      // With df = p + 7 every entry has finite variance, so the
                      // 50k-draw mean is a sharp test of the sampler itself.
                      RngStream rng(vkey("inverse_wishart_df12"));
                      const std::size_t p = 5, draws = 50000;
                      Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(p, p);
                      for (std::size_t i = 0; i < draws; ++i) {
                        acc += sample_inverse_wishart(p, p + 7.0, rng);
                      }
                      acc *= 6.0 / static_cast<double>(draws);
                      const double dev = (acc - Eigen::MatrixXd::Identity(p, p)).cwiseAbs().maxCoeff();
                      return outcome(dev < 0.05,
                                     fmt("max entrywise |6 mean - I| = %.4f at df = 12", dev));
                    }});
  checks.push_back({"oracle", "heteroscedastic_variance_at_zero", [] {
                      DgpConfig dc;
                      dc.regime = NoiseRegime::kHeteroscedastic;
                      dc.mixing_candidates = 10;
                      const DgpParams p = make_dgp(dc, vkey("hetero.dgp"));
                      const std::size_t n = 100000;
                      const Tensor c(Shape{n, p.n_c}, 0.0);
                      const Tensor cp = sample_positive(p, c, vkey("hetero.pos"));
                      double worst = 0.0;
                      for (std::size_t j = 0; j < p.n_c; ++j) {
                        double m = 0.0, v = 0.0;
                        for (std::size_t i = 0; i < n; ++i) m += cp.at(i, j);
                        m /= n;
                        for (std::size_t i = 0; i < n; ++i) v += (cp.at(i, j) - m) * (cp.at(i, j) - m);
                        v /= n;
                        worst = std::max(worst, std::abs(v - 1.0));
                      }
                      return outcome(worst < 0.03,
                                     fmt("max |Var(c+ - c) - 1| = %.4f over 1e5 draws", worst));
                    }});
  checks.push_back({"oracle", "mixing_injectivity", [] {
                      DgpConfig dc;
                      dc.mixing_candidates = 1000;
                      const DgpParams p = make_dgp(dc, vkey("inj.dgp"));
                      const std::size_t n = 10000;
                      LatentBatch a = eval_distribution(p, EvalKind::kTrain, n, vkey("inj.a"));
                      LatentBatch b = eval_distribution(p, EvalKind::kTrain, n, vkey("inj.b"));
                      const Tensor za = a.z(), zb = b.z();
                      const Tensor xa = p.mixing.apply(za), xb = p.mixing.apply(zb);
                      std::size_t collisions = 0, distinct = 0;
                      for (std::size_t i = 0; i < n; ++i) {
                        bool z_same = true, x_same = true;
                        for (std::size_t j = 0; j < za.cols(); ++j) z_same &= za.at(i, j) == zb.at(i, j);
                        for (std::size_t j = 0; j < xa.cols(); ++j) x_same &= xa.at(i, j) == xb.at(i, j);
                        if (!z_same) {
                          ++distinct;
                          if (x_same) ++collisions;
                        }
                      }
                      return outcome(collisions == 0 && distinct > 0,
                                     fmt("%.0f collisions among %.0f distinct pairs",
                                         static_cast<double>(collisions),
                                         static_cast<double>(distinct)));
                    }});
  checks.push_back({"oracle", "wide_distribution_moments", [] {
                      DgpConfig dc;
                      dc.mixing_candidates = 10;
                      const DgpParams p = make_dgp(dc, vkey("wide.dgp"));
                      LatentBatch lat = eval_distribution(p, EvalKind::kWide, 100000, vkey("wide"));
                      const Eigen::MatrixXd z = to_eigen(lat.z());
                      const Eigen::MatrixXd zc = z.rowwise() - z.colwise().mean();
                      const Eigen::MatrixXd cov = zc.transpose() * zc / static_cast<double>(z.rows());
                      double off = 0.0, var_dev = 0.0;
                      for (Eigen::Index i = 0; i < cov.rows(); ++i) {
                        var_dev = std::max(var_dev, std::abs(cov(i, i) / kWideVariance - 1.0));
                        for (Eigen::Index j = 0; j < cov.cols(); ++j) {
                          if (i != j) off = std::max(off, std::abs(cov(i, j)));
                        }
                      }
                      return outcome(off < 0.05 && var_dev < 0.03,
                                     fmt("max |off-diag cov| = %.4f, max rel var dev = %.4f", off,
                                         var_dev));
                    }});
  checks.push_back({"oracle", "sphere_covariance_dispersion", [] {
                      // Random full-rank 2 -> 3 LeakyReLU MLP, normalised onto S^2.
                      const Eigen::MatrixXd w1 = to_eigen(gaussian_tensor({8, 2}, vkey("p1.w1")));
                      const Eigen::MatrixXd w2 = to_eigen(gaussian_tensor({3, 8}, vkey("p1.w2")));
                      const Eigen::MatrixXd b1 = to_eigen(gaussian_tensor({8, 1}, vkey("p1.b1")));
                      VectorMap h = [&](const Eigen::VectorXd& z) {
                        Eigen::VectorXd a = w1 * z + b1.col(0);
                        for (Eigen::Index i = 0; i < a.size(); ++i) a(i) = a(i) >= 0 ? a(i) : 0.2 * a(i);
                        const Eigen::VectorXd y = w2 * a;
                        return Eigen::VectorXd(y / y.norm());
                      };
                      std::vector<Eigen::VectorXd> zs;
                      const Tensor zt = gaussian_tensor({100, 2}, vkey("p1.z"));
                      for (std::size_t i = 0; i < 100; ++i) {
                        zs.push_back(Eigen::Vector2d(zt.at(i, 0), zt.at(i, 1)));
                      }
                      const auto rep = heteroscedasticity_probe(h, zs, Eigen::MatrixXd::Identity(2, 2));
                      return outcome(rep.frobenius_ratio > 1.1 && rep.used >= 90,
                                     fmt("dispersion ratio %.3f over %.0f samples",
                                         rep.frobenius_ratio, static_cast<double>(rep.used)));
                    }});
  checks.push_back({"oracle", "flat_affine_control", [] {
                      const Eigen::MatrixXd a = to_eigen(gaussian_tensor({3, 2}, vkey("p1.a")));
                      VectorMap h = [&](const Eigen::VectorXd& z) {
                        return Eigen::VectorXd(a * z + Eigen::Vector3d(0.5, -1.0, 2.0));
                      };
                      std::vector<Eigen::VectorXd> zs;
                      const Tensor zt = gaussian_tensor({100, 2}, vkey("p1.z"));
                      for (std::size_t i = 0; i < 100; ++i) {
                        zs.push_back(Eigen::Vector2d(zt.at(i, 0), zt.at(i, 1)));
                      }
                      const auto rep = heteroscedasticity_probe(h, zs, Eigen::MatrixXd::Identity(2, 2));
                      const double dev = std::abs(rep.frobenius_ratio - 1.0);
                      return outcome(dev < 1e-6, fmt("|ratio - 1| = %.3g", dev));
                    }});
  checks.push_back({"oracle", "similarity_dot_identity", [] {
                      Tape tape;
                      Var a = l2_normalize(tape.constant(gaussian_tensor({6, 5}, vkey("sim.a"))));
                      Var b = l2_normalize(tape.constant(gaussian_tensor({6, 5}, vkey("sim.b"))));
                      Var s = similarity(SimilarityVariant::kInfoNce, a, b,
                                         tape.constant(Tensor(Shape{1, 1}, 1.0)));
                      double worst = 0.0;
                      for (std::size_t i = 0; i < 6; ++i) {
                        double dot = 0.0;
                        for (std::size_t j = 0; j < 5; ++j) dot += a.value().at(i, j) * b.value().at(i, j);
                        worst = std::max(worst, std::abs(s.value()[i] - 2.0 * (dot - 1.0)));
                      }
                      return outcome(worst < 1e-12, fmt("max deviation %.3g", worst));
                    }});
  checks.push_back({"oracle", "modular_editor_offset", [] {
                      double worst = 0.0;
                      for (ModularBias mode : {ModularBias::kVector, ModularBias::kScalar}) {
                        ModelBundle b = small_bundle(Objective::kAdasslS, 4, 1, mode);
                        const Editor& e = *b.editor;
                        b.params[e.a].value.fill(0.0);
                        b.params[e.b].value.fill(0.0);
                        b.params[e.offset].value.fill(1.0);
                        Tape tape;
                        Forward fw(b, tape, {false, false, false});
                        const Tensor f = gaussian_tensor({3, b.config.embedding_dim()}, vkey("mod.f"));
                        Var t = edit(fw, e, tape.constant(f), tape.constant(Tensor(Shape{3, 1}, 1.0)));
                        for (std::size_t i = 0; i < f.size(); ++i) {
                          worst = std::max(worst, std::abs(t.value()[i] - (f[i] + 1.0)));
                        }
                      }
                      return outcome(worst < 1e-15, fmt("max |t - (f + 1)| = %.3g", worst));
                    }});
  checks.push_back({"oracle", "variational_reparameterisation", [] {
                      ModelBundle b = small_bundle(Objective::kAdasslV, 4, 3);
                      const std::size_t n = 100000;
                      const Tensor f = repeat_row(gaussian_tensor({1, b.config.embedding_dim()},
                                                                  vkey("rep.f")), n);
                      Tape tape;
                      Forward fw(b, tape, {false, false, false});
                      Var fx = tape.constant(f);
                      auto vs = sample_r_variational(fw, fx, Var{}, RMode::kPrior, vkey("rep.eps"));
                      double worst_mean = 0.0, worst_var = 0.0;
                      for (std::size_t j = 0; j < 3; ++j) {
                        const double mu = vs.mu_p.value().at(0, j);
                        const double var = std::exp(vs.logvar_p.value().at(0, j));
                        double m = 0.0, v = 0.0;
                        for (std::size_t i = 0; i < n; ++i) m += vs.r.value().at(i, j);
                        m /= n;
                        for (std::size_t i = 0; i < n; ++i) {
                          v += (vs.r.value().at(i, j) - m) * (vs.r.value().at(i, j) - m);
                        }
                        v /= n;
                        worst_mean = std::max(worst_mean, std::abs(m - mu) / std::sqrt(var));
                        worst_var = std::max(worst_var, std::abs(v / var - 1.0));
                      }
                      return outcome(worst_mean < 0.02 && worst_var < 0.02,
                                     fmt("mean dev %.4f sd, rel var dev %.4f", worst_mean, worst_var));
                    }});
  checks.push_back({"oracle", "gumbel_sigmoid_frequency", [] {
                      ModelBundle b = small_bundle(Objective::kAdasslS, 4, 3);
                      const std::size_t n = 100000;
                      const std::size_t df = b.config.embedding_dim();
                      const Tensor f = repeat_row(gaussian_tensor({1, df}, vkey("gs.f")), n);
                      const Tensor fp = repeat_row(gaussian_tensor({1, df}, vkey("gs.fp")), n);
                      Tape tape;
                      Forward fw(b, tape, {false, false, false});
                      auto ss = sample_r_sparse(fw, tape.constant(f), tape.constant(fp), true,
                                                vkey("gs.noise"));
                      double worst = 0.0;
                      for (std::size_t j = 0; j < 3; ++j) {
                        double freq = 0.0;
                        for (std::size_t i = 0; i < n; ++i) freq += ss.mask.at(i, j);
                        freq /= n;
                        const double pi = ss.pi.value().at(0, j);
                        worst = std::max(worst, std::abs(freq / pi - 1.0));
                      }
                      return outcome(worst < 0.02, fmt("max relative |freq - pi| / pi = %.4f", worst));
                    }});
  checks.push_back({"oracle", "ema_geometric_decay", [] {
                      ModelBundle b = small_bundle(Objective::kByol, 4, 2);
                      for (auto& s : b.ema_shadow) {
                        for (double& v : s.values()) v += 1.0;
                      }
                      auto gap = [&] {
                        double acc = 0.0;
                        for (std::size_t k = 0; k < b.encoder_params.size(); ++k) {
                          const Tensor& on = b.params[b.encoder_params[k]].value;
                          for (std::size_t i = 0; i < on.size(); ++i) {
                            const double d = b.ema_shadow[k][i] - on[i];
                            acc += d * d;
                          }
                        }
                        return std::sqrt(acc);
                      };
                      const double g0 = gap();
                      const int k = 250;
                      for (int i = 0; i < k; ++i) ema_update(b, 0.996);
                      const double expected = g0 * std::pow(0.996, k);
                      const double err = std::abs(gap() / expected - 1.0);
                      return outcome(err < 1e-9, fmt("relative deviation from 0.996^k: %.3g", err));
                    }});
  checks.push_back({"oracle", "infonce_brute_force", [] {
                      Tape tape;
                      Var s = tape.constant(Tensor::matrix(2, 2, {1, 0, 0, 1}));
                      const double got = infonce(s, 1.0, false).value().item();
                      // -log(e^{s_ii} / ((1/K) sum_j e^{s_ij})) summed directly.
                      double brute = 0.0;
                      const double m[2][2] = {{1, 0}, {0, 1}};
                      for (int i = 0; i < 2; ++i) {
                        double denom = 0.0;
                        for (int j = 0; j < 2; ++j) denom += std::exp(m[i][j]);
                        brute += -std::log(std::exp(m[i][i]) / (denom / 2.0));
                      }
                      brute /= 2.0;
                      const double closed = std::log((std::exp(1.0) + 1.0) / 2.0) - 1.0;
                      const double err = std::max(std::abs(got - brute), std::abs(got - closed));
                      return outcome(err < 1e-12, fmt("loss %.12f, deviation %.3g", got, err));
                    }});
  checks.push_back({"oracle", "kl_quadrature", [] {
                      const Tensor mq = gaussian_tensor({1, 4}, vkey("klq.mq"));
                      const Tensor lq = gaussian_tensor({1, 4}, vkey("klq.lq"));
                      const Tensor mp = gaussian_tensor({1, 4}, vkey("klq.mp"));
                      const Tensor lp = gaussian_tensor({1, 4}, vkey("klq.lp"));
                      Tape tape;
                      const double closed = kl_factorized_gaussians(
                          tape.constant(mq), tape.constant(lq), tape.constant(mp),
                          tape.constant(lp)).value().item();
                      double quad = 0.0;
                      for (std::size_t i = 0; i < 4; ++i) {
                        quad += kl_quadrature(mq[i], std::exp(lq[i]), mp[i], std::exp(lp[i]));
                      }
                      const double err = std::abs(closed - quad);
                      return outcome(err < 1e-4, fmt("closed %.8f vs quadrature %.8f (|diff| %.2g)",
                                                     closed, quad, err));
                    }});
  checks.push_back({"oracle", "expected_l0_gradient", [] {
                      const Tensor logits = gaussian_tensor({2, 3}, vkey("l0g.logits"));
                      Tape tape;
                      Var l = tape.leaf(logits);
                      Var pi = sigmoid(l);
                      tape.backward(expected_l0(pi));
                      const double rows = static_cast<double>(logits.rows());
                      const Tensor g = l.grad();
                      double worst_chain = 0.0, worst_fd = 0.0;
                      const double h = 1e-6;
                      for (std::size_t i = 0; i < logits.size(); ++i) {
                        const double p = sigmoid_value(logits[i]);
                        worst_chain = std::max(worst_chain, std::abs(g[i] - p * (1.0 - p) / rows));
                        const double fd =
                            (sigmoid_value(logits[i] + h) - sigmoid_value(logits[i] - h)) / (2 * h * rows);
                        worst_fd = std::max(worst_fd, std::abs(g[i] - fd) / std::max(std::abs(fd), 1e-12));
                      }
                      return outcome(worst_chain < 1e-12 && worst_fd < 1e-6,
                                     fmt("|g - pi(1-pi)/B| %.2g, FD rel err %.2g", worst_chain,
                                         worst_fd));
                    }});
  checks.push_back({"oracle", "adamw_single_step", [] {
                      ParameterStore ps;
                      ps.add("w", gaussian_tensor({3, 4}, vkey("adam.w")), true);
                      const Tensor w0 = ps[0].value;
                      OptimState opt = OptimState::make(ps, AdamWConfig{5e-4, 0.0});
                      Tensor g = gaussian_tensor({3, 4}, vkey("adam.g"));
                      adamw_step(opt, ps, {g});
                      double worst = 0.0;
                      for (std::size_t i = 0; i < g.size(); ++i) {
                        const double step = w0[i] - ps[0].value[i];
                        const double expected = 5e-4 * (g[i] > 0 ? 1.0 : -1.0);
                        worst = std::max(worst, std::abs(step - expected) / 5e-4);
                      }
                      // |g| / (|g| + eps) deviates from 1 by at most eps / |g|.
                      return outcome(worst < 1e-5, fmt("max |step - lr sign(g)| / lr = %.2g", worst));
                    }});
  checks.push_back({"oracle", "probe_normal_equations", [] {
                      const Eigen::MatrixXd x = to_eigen(gaussian_tensor({200, 10}, vkey("pr.x")));
                      const Eigen::MatrixXd w = to_eigen(gaussian_tensor({10, 3}, vkey("pr.w")));
                      const Eigen::MatrixXd noise = to_eigen(gaussian_tensor({200, 3}, vkey("pr.n")));
                      const Eigen::MatrixXd y = (x * w + 0.1 * noise).rowwise() +
                                                Eigen::RowVector3d(0.5, -1.0, 2.0);
                      const LinearProbe probe = fit_linear_probe(x, y, 1e-8);
                      Eigen::MatrixXd a(200, 11);
                      a << x, Eigen::VectorXd::Ones(200);
                      const Eigen::MatrixXd beta = (a.transpose() * a).ldlt().solve(a.transpose() * y);
                      const double dw = (probe.weights - beta.topRows(10)).cwiseAbs().maxCoeff();
                      const double db = (probe.intercept - beta.row(10)).cwiseAbs().maxCoeff();
                      const double err = std::max(dw, db);
                      return outcome(err < 1e-8, fmt("max coefficient deviation %.3g", err));
                    }});
  checks.push_back({"oracle", "dci_entropy_formula", [] {
                      Eigen::MatrixXd r(3, 2);
                      r << 0.9, 0.1, 0.2, 0.6, 0.5, 0.5;
                      const double got = dci_from_importance(r);
                      // Independent evaluation: base-K logarithms, explicit weights.
                      double total = 0.0;
                      for (int j = 0; j < 3; ++j) total += r(j, 0) + r(j, 1);
                      double expected = 0.0;
                      for (int j = 0; j < 3; ++j) {
                        const double row = r(j, 0) + r(j, 1);
                        double h = 0.0;
                        for (int k = 0; k < 2; ++k) {
                          const double p = r(j, k) / row;
                          h -= p * std::log2(p);
                        }
                        expected += row / total * (1.0 - h);
                      }
                      const double err = std::abs(got - expected);
                      return outcome(err < 1e-10, fmt("D = %.12f, deviation %.3g", got, err));
                    }});

  // Training-run properties (stochastic; asserted statistically).
  checks.push_back({"training", "zero_regime_loss_trend", [] {
                      ExperimentConfig c = desk_config(Objective::kInfoNce, NoiseRegime::kZero,
                                                       5000, 256);
                      c.train.log_every = 1;
                      const TrainResult tr = train(c, 0);
                      std::vector<double> windows;
                      for (std::size_t w = 0; w + 100 <= tr.trace.size(); w += 100) {
                        double acc = 0.0;
                        for (std::size_t i = w; i < w + 100; ++i) acc += tr.trace[i].total;
                        windows.push_back(acc / 100.0);
                      }
                      // Allowed rise between consecutive window means.
                      const double slack = 0.01;
                      double worst_rise = 0.0;
                      for (std::size_t i = 1; i < windows.size(); ++i) {
                        worst_rise = std::max(worst_rise, windows[i] - windows[i - 1]);
                      }
                      const bool ok = !windows.empty() && worst_rise <= slack &&
                                      windows.back() < windows.front();
                      return outcome(ok, fmt("first %.4f last %.4f, largest window rise %.4f",
                                             windows.empty() ? 0.0 : windows.front(),
                                             windows.empty() ? 0.0 : windows.back(), worst_rise));
                    }});
  checks.push_back({"training", "huge_beta_closes_gates", [] {
                      ExperimentConfig c = gradcheck_config(Objective::kAdasslS,
                                                            NoiseRegime::kComplex);
                      c.train.batch = 64;
                      c.train.steps = 500;
                      c.train.log_every = 1;
                      c.loss.beta = BetaSchedule{1e6, 1e6, 0};
                      // A toy-sized step so 500 Adam updates can move the gates.
                      c.train.lr = 1e-2;
                      const TrainResult tr = train(c, 0);
                      const double mean_pi = tr.trace.back().expected_l0 /
                                             static_cast<double>(c.model.d_r);
                      return outcome(mean_pi < 0.05, fmt("mean pi after 500 steps %.4f", mean_pi));
                    }});
  checks.push_back({"training", "complex_density_spread_and_ood", [] {
                      // AdaSSL-V's prior-sampled edits spread the exported z+ cloud
                      // more than InfoNCE's point predictions; every model keeps
                      // wide_ood at or below wide up to slack.
                      const double slack = 0.05;
                      double var_v = 0.0, var_nce = 0.0, worst_gap = -1.0;
                      for (Objective o : {Objective::kAdasslV, Objective::kInfoNce}) {
                        ExperimentConfig c = desk_config(o, NoiseRegime::kComplex, 3000, 256);
                        TrainResult tr = train(c, 0);
                        const auto var = density_export(tr.bundle, tr.dgp, 5000, "", vkey("dens"), 5000);
                        (o == Objective::kAdasslV ? var_v : var_nce) = total_variance(var);
                        Embedder emb = [&](const Tensor& x) { return embed(tr.bundle, x); };
                        const auto scores = evaluate_regimes(emb, tr.dgp, c.eval, vkey("dens.eval"));
                        double wide = 0.0, ood = 0.0;
                        for (const auto& s : scores) {
                          if (s.regime == ProbeRegime::kWide) wide = s.r2_test;
                          if (s.regime == ProbeRegime::kWideOod) ood = s.r2_test;
                        }
                        worst_gap = std::max(worst_gap, ood - wide);
                      }
                      return outcome(var_v > var_nce && worst_gap <= slack,
                                     fmt("export variance V %.4f vs InfoNCE %.4f; max(ood - wide) %.4f",
                                         var_v, var_nce, worst_gap));
                    }});
  checks.push_back({"training", "order_independent_trials", [] {
                      ExperimentConfig c = desk_config(Objective::kAdasslS, NoiseRegime::kComplex,
                                                       200, 64);
                      c.eval.probe_train = 500;
                      c.eval.probe_test = 500;
                      c.eval.dci_samples = 300;
                      const std::string alone = report_json(run_trial(c, 1));
                      const std::string first = report_json(run_trial(c, 0));
                      const std::string after = report_json(run_trial(c, 1));
                      const std::string csv1 = results_csv(aggregate({report_from_json(first),
                                                                      report_from_json(after)}));
                      const std::string csv2 = results_csv(aggregate({run_trial(c, 0), run_trial(c, 1)}));
                      const bool ok = alone == after && first != after && csv1 == csv2;
                      return outcome(ok, ok ? "trial 1 identical alone and after trial 0; CSV rerun identical"
                                            : "reports or CSV differ between runs");
                    }});

  // Mutation test: the suite must notice a corrupted softplus adjoint, and
  // pin it on softplus alone.
  checks.push_back({"mutation", "softplus_adjoint_sign", [] {
                      const fault::Fault previous = fault::active();
                      fault::inject(fault::Fault::kSoftplusAdjointSign);
                      std::vector<CheckResult> results;
                      try {
                        results = op_gradient_checks();
                      } catch (...) {
                        fault::inject(previous);
                        throw;
                      }
                      fault::inject(previous);
                      std::vector<std::string> failing;
                      for (const auto& r : results) {
                        if (!r.passed) failing.push_back(r.name);
                      }
                      const bool ok = failing.size() == 1 && failing[0] == "softplus";
                      std::string detail = "failing under injection:";
                      for (const auto& f : failing) detail += " " + f;
                      if (failing.empty()) detail += " none";
                      return outcome(ok, detail);
                    }});
  return checks;
}

}  // namespace

std::vector<CheckResult> op_gradient_checks() {
  std::vector<CheckResult> out;
  for (const auto& op : op_checks()) {
    CheckResult r = grad_outcome(check_function(op.f, op.inputs, {}, 1e-6), op.tol);
    r.group = "gradient";
    r.name = op.name;
    out.push_back(r);
  }
  return out;
}

std::vector<std::string> verify_groups() { return {"gradient", "oracle", "training", "mutation"}; }

bool VerifyReport::passed() const {
  return std::all_of(checks.begin(), checks.end(), [](const CheckResult& c) { return c.passed; });
}

const CheckResult* VerifyReport::find(const std::string& name) const {
  for (const auto& c : checks) {
    if (c.name == name) return &c;
  }
  return nullptr;
}

std::string VerifyReport::table() const {
  std::ostringstream os;
  char buf[512];
  for (const auto& c : checks) {
    std::snprintf(buf, sizeof(buf), "%-4s  %-9s %-38s %7.2fs  %s\n", c.passed ? "PASS" : "FAIL",
                  c.group.c_str(), c.name.c_str(), c.seconds, c.detail.c_str());
    os << buf;
  }
  std::size_t failed = 0;
  for (const auto& c : checks) failed += c.passed ? 0 : 1;
  std::snprintf(buf, sizeof(buf), "%zu checks, %zu failed, %.1fs\n", checks.size(), failed, seconds);
  os << buf;
  return os.str();
}

std::string VerifyReport::json() const {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& c : checks) {
    arr.push_back({{"group", c.group},
                   {"name", c.name},
                   {"passed", c.passed},
                   {"detail", c.detail},
                   {"seconds", c.seconds}});
  }
  nlohmann::json j = {{"passed", passed()}, {"seconds", seconds}, {"checks", arr}};
  return j.dump(2) + "\n";
}

VerifyReport run_verify(const VerifyOptions& options) {
  VerifyReport report;
  const auto start = Clock::now();
  for (const auto& check : build_checks()) {
    if (!options.groups.empty() && !options.groups.count(check.group)) continue;
    if (!options.names.empty() && !options.names.count(check.name)) continue;
    const auto t0 = Clock::now();
    CheckResult r;
    try {
      r = check.run();
    } catch (const std::exception& e) {
      r = outcome(false, std::string("threw: ") + e.what());
    }
    r.group = check.group;
    r.name = check.name;
    r.seconds = std::chrono::duration<double>(Clock::now() - t0).count();
    if (options.on_result) options.on_result(r);
    report.checks.push_back(std::move(r));
  }
  report.seconds = std::chrono::duration<double>(Clock::now() - start).count();
  return report;
}

}  // namespace adassl
