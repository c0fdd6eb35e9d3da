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


#include <cmath>
#include <limits>

#if defined(__SSE__)
#include <xmmintrin.h>
#endif

#include <doctest.h>

#include "adassl/error.hpp"
#include "adassl/train_eval.hpp"

using namespace adassl;

namespace {

Eigen::MatrixXd randm(Eigen::Index r, Eigen::Index c, const char* label) {
  return to_eigen(gaussian_tensor({static_cast<std::size_t>(r), static_cast<std::size_t>(c)},
                                  derive_key(41, label)));
}

ExperimentConfig tiny(Objective o) {
  ExperimentConfig c;
  c.dgp.n_c = 2;
  c.dgp.n_s = 2;
  c.dgp.mixing_candidates = 10;
  c.dgp.regime = NoiseRegime::kComplex;
  c.model.width_multiplier = 2;
  c.model.head_width = 8;
  c.model.d_r = 2;
  c.loss.objective = o;
  c.loss.base = o == Objective::kByol ? BaseLoss::kByol : BaseLoss::kInfoNce;
  c.train.steps = 20;
  c.train.batch = 32;
  c.train.log_every = 5;
  c.eval.probe_train = 300;
  c.eval.probe_test = 300;
  c.eval.dci_samples = 200;
  c.eval.hetero_samples = 0;
  c.trials.n_seeds = 2;
  c.io.checkpoints = false;
  return with_objective_defaults(c);
}

}  // namespace

TEST_CASE("AdamW with zero learning rate leaves parameters untouched") {
  ParameterStore ps;
  ps.add("w", gaussian_tensor({3, 3}, derive_key(1, "w")), true);
  const Tensor before = ps[0].value;
  OptimState opt = OptimState::make(ps, AdamWConfig{0.0, 1e-2});
  adamw_step(opt, ps, {gaussian_tensor({3, 3}, derive_key(1, "g"))});
  for (std::size_t i = 0; i < before.size(); ++i) CHECK(ps[0].value[i] == before[i]);
}

TEST_CASE("AdamW rejects non-finite gradients before touching anything") {
  ParameterStore ps;
  ps.add("w", Tensor(Shape{1, 2}, 1.0), true);
  OptimState opt = OptimState::make(ps, AdamWConfig{});
  Tensor g(Shape{1, 2}, 0.5);
  g[1] = std::numeric_limits<double>::quiet_NaN();
  try {
    adamw_step(opt, ps, {g});
    FAIL("expected a numeric error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kNumeric);
  }
  CHECK(ps[0].value[0] == 1.0);
  CHECK(opt.step == 0);
}

TEST_CASE("weight decay skips parameters flagged decay = false") {
  ParameterStore ps;
  ps.add("w", Tensor(Shape{1, 1}, 1.0), true);
  ps.add("b", Tensor(Shape{1, 1}, 1.0), false);
  OptimState opt = OptimState::make(ps, AdamWConfig{0.1, 0.5});
  adamw_step(opt, ps, {Tensor(Shape{1, 1}, 0.0), Tensor(Shape{1, 1}, 0.0)});
  CHECK(ps[0].value[0] == doctest::Approx(1.0 - 0.1 * 0.5));
  CHECK(ps[1].value[0] == 1.0);
}

TEST_CASE("linear probe recovers an exact affine map") {
  const Eigen::MatrixXd x = randm(100, 4, "x");
  const Eigen::MatrixXd w = randm(4, 2, "w");
  const Eigen::MatrixXd y = (x * w).rowwise() + Eigen::RowVector2d(1.0, -2.0);
  const LinearProbe p = fit_linear_probe(x, y);
  CHECK(r_squared(y, p.predict(x)) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK((p.weights - w).cwiseAbs().maxCoeff() < 1e-8);
  CHECK_THROWS_AS(fit_linear_probe(randm(3, 4, "u"), randm(3, 1, "v")), Error);
}

TEST_CASE("R squared averages uniformly over target dimensions") {
  Eigen::MatrixXd y(4, 2), yh(4, 2);
  y << 1, 0, 2, 0, 3, 1, 4, 1;
  yh << 1, 0.5, 2, 0.5, 3, 0.5, 4, 0.5;
  const auto per = r_squared_per_dim(y, yh);
  CHECK(per[0] == doctest::Approx(1.0));
  CHECK(per[1] == doctest::Approx(0.0));
  CHECK(r_squared(y, yh) == doctest::Approx(0.5));
}

TEST_CASE("probe R squared on train folds is not far below test folds") {
  const Eigen::MatrixXd x = randm(4000, 6, "px");
  const Eigen::MatrixXd y = x.leftCols(2) + 0.5 * randm(4000, 2, "pn");
  const LinearProbe p = fit_linear_probe(x.topRows(2000), y.topRows(2000));
  const double train = r_squared(y.topRows(2000), p.predict(x.topRows(2000)));
  const double test = r_squared(y.bottomRows(2000), p.predict(x.bottomRows(2000)));
  CHECK(train >= test - 0.02);
}

TEST_CASE("lasso shrinks everything to zero for a large penalty") {
  const Eigen::MatrixXd x = randm(200, 5, "lx");
  const Eigen::VectorXd y = x.col(0) * 2.0;
  CHECK(lasso(x, y, 100.0).cwiseAbs().maxCoeff() == 0.0);
  const Eigen::VectorXd w = lasso(x, y, 1e-4);
  CHECK(w(0) == doctest::Approx(2.0).epsilon(1e-2));
}

TEST_CASE("DCI is invariant to permuting embedding dims and factors") {
  const Eigen::MatrixXd f = randm(500, 3, "f");
  Eigen::MatrixXd e(500, 4);
  e << f.col(0), f.col(1) + 0.3 * f.col(2), f.col(2), randm(500, 1, "noise");
  const double base = dci_disentanglement(e, f, 0.01);
  Eigen::MatrixXd e2(500, 4), f2(500, 3);
  e2 << e.col(3), e.col(1), e.col(0), e.col(2);
  f2 << f.col(2), f.col(0), f.col(1);
  CHECK(dci_disentanglement(e2, f, 0.01) == doctest::Approx(base).epsilon(1e-10));
  CHECK(dci_disentanglement(e, f2, 0.01) == doctest::Approx(base).epsilon(1e-10));
  Eigen::MatrixXd diag = Eigen::MatrixXd::Identity(3, 3);
  CHECK(dci_from_importance(diag) == doctest::Approx(1.0));
}

TEST_CASE("aggregation reproduces a direct mean and population std") {
  std::vector<EvalReport> reports(3);
  const double v[3] = {0.2, 0.5, 0.8};
  for (int i = 0; i < 3; ++i) {
    reports[i].model = "infonce";
    reports[i].completed = true;
    reports[i].scores = {{ProbeRegime::kPz, 0.0, v[i]}};
  }
  const auto rows = aggregate(reports);
  REQUIRE(!rows.empty());
  CHECK(rows[0].metric == "r2");
  CHECK(rows[0].mean == doctest::Approx(0.5));
  CHECK(rows[0].std == doctest::Approx(std::sqrt(0.06)));
  CHECK(rows[0].n_seeds == 3);
  const auto one = aggregate({reports[0]});
  CHECK(one[0].std == 0.0);
  CHECK(results_csv(rows).rfind("model,regime,metric,mean,std,n_seeds\n", 0) == 0);
  reports[1].completed = false;
  CHECK(aggregate(reports)[0].n_seeds == 2);
}

TEST_CASE("report JSON round-trips") {
  EvalReport r;
  r.model = "adassl_s";
  r.trial = 2;
  r.seed = 12345678901234ULL;
  r.completed = true;
  r.scores = {{ProbeRegime::kWideOod, 0.25, 0.125}};
  r.dci = 0.3;
  r.expected_l0 = 1.75;
  const std::string text = report_json(r);
  CHECK(report_json(report_from_json(text)) == text);
}

TEST_CASE("a zero-step run evaluates the initial weights") {
  ExperimentConfig c = tiny(Objective::kInfoNce);
  c.train.steps = 0;
  const EvalReport r = run_trial(c, 0);
  CHECK(r.completed);
  CHECK(r.scores.size() == 3);
}

TEST_CASE("every objective trains a few steps without numeric trouble") {
  for (Objective o : {Objective::kInfoNce, Objective::kAnInfoNce, Objective::kHInfoNceAffine,
                      Objective::kHInfoNceMlp, Objective::kByol, Objective::kAdasslV,
                      Objective::kAdasslS}) {
    CAPTURE(objective_name(o));
    const TrainResult t = train(tiny(o), 0);
    CHECK(!t.aborted);
    CHECK(t.steps_done == 20);
    CHECK(std::isfinite(t.final_loss));
    CHECK(t.trace.back().step == 19);
  }
}

TEST_CASE("trials are reproducible and independent of order") {
  const ExperimentConfig c = tiny(Objective::kAdasslV);
  const std::string alone = report_json(run_trial(c, 1));
  run_trial(c, 0);
  CHECK(report_json(run_trial(c, 1)) == alone);
}

TEST_CASE("density export returns one variance per latent dimension") {
  ExperimentConfig c = tiny(Objective::kAdasslV);
  TrainResult t = train(c, 0);
  const auto var = density_export(t.bundle, t.dgp, 200, "", derive_key(5, "d"), 300);
  CHECK(var.size() == c.dgp.n_c + c.dgp.n_s);
  for (double v : var) CHECK(v >= 0.0);
}

#if defined(__SSE__)
TEST_CASE("training leaves the caller's floating-point mode untouched") {
  const unsigned before = _mm_getcsr();
  (void)train(tiny(Objective::kInfoNce), 0);
  CHECK(_mm_getcsr() == before);
}
#endif
