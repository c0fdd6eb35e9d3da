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
#include <filesystem>
#include <fstream>
#include <string>

#include <doctest.h>

#include "adassl/dgp.hpp"
#include "adassl/error.hpp"

using namespace adassl;

namespace {

DgpParams small_dgp(NoiseRegime regime, const char* label = "dgp") {
  DgpConfig c;
  c.regime = regime;
  c.mixing_candidates = 20;
  return make_dgp(c, derive_key(11, label));
}

}  // namespace

TEST_CASE("inverse softplus of one") {
  CHECK(softplus_value(inverse_softplus_one()) == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("sigma draws are symmetric positive definite") {
  for (std::uint64_t k = 0; k < 20; ++k) {
    const Eigen::MatrixXd s = sample_sigma(5, derive_key(3, k));
    CHECK((s - s.transpose()).cwiseAbs().maxCoeff() < 1e-12);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(s);
    CHECK(es.eigenvalues().minCoeff() > 0.0);
  }
}

TEST_CASE("mixing layer selection keeps the best-conditioned candidate") {
  std::vector<Eigen::MatrixXd> pool = {Eigen::MatrixXd::Identity(3, 3) * 2.0,
                                       Eigen::Vector3d(1, 2, 4).asDiagonal(),
                                       Eigen::MatrixXd::Identity(3, 3)};
  CHECK(condition_number(pool[1]) == doctest::Approx(4.0));
  // Ties resolve to the first minimiser.
  CHECK(select_min_condition(pool) == 0);
  const MixingMlp g = build_mixing(6, derive_key(1, "g"), WeightNormalization::kRows, 50);
  for (double k : g.condition_numbers) CHECK(k >= 1.0);
  for (const auto& w : g.weights) {
    for (Eigen::Index r = 0; r < w.rows(); ++r) CHECK(w.row(r).norm() == doctest::Approx(1.0));
  }
}

TEST_CASE("zero-variance positives equal the anchor") {
  const DgpParams p = small_dgp(NoiseRegime::kZero);
  const LatentBatch b = sample_latents(p, 32, derive_key(5, "b"));
  for (std::size_t i = 0; i < b.c.size(); ++i) CHECK(b.c_pos[i] == b.c[i]);
}

TEST_CASE("isotropic positives have unit conditional variance") {
  const DgpParams p = small_dgp(NoiseRegime::kIsotropic);
  const Tensor c(Shape{50000, p.n_c}, 0.5);
  const Tensor cp = sample_positive(p, c, derive_key(5, "iso"));
  for (std::size_t d = 0; d < p.n_c; ++d) {
    double m = 0.0, v = 0.0;
    for (std::size_t i = 0; i < c.rows(); ++i) m += cp.at(i, d) - 0.5;
    m /= c.rows();
    for (std::size_t i = 0; i < c.rows(); ++i) v += std::pow(cp.at(i, d) - 0.5 - m, 2);
    v /= c.rows();
    CHECK(std::abs(m) < 0.03);
    CHECK(v == doctest::Approx(1.0).epsilon(0.03));
  }
}

TEST_CASE("samples do not depend on how a batch is partitioned") {
  const DgpParams p = small_dgp(NoiseRegime::kComplex);
  const LatentBatch big = sample_latents(p, 10, derive_key(9, "part"));
  const LatentBatch small = sample_latents(p, 4, derive_key(9, "part"));
  for (std::size_t i = 0; i < 4; ++i) {
    for (std::size_t d = 0; d < p.n_c; ++d) {
      CHECK(big.c.at(i, d) == small.c.at(i, d));
      CHECK(big.c_pos.at(i, d) == small.c_pos.at(i, d));
    }
  }
}

TEST_CASE("complex regime keeps unresampled coordinates fixed") {
  const DgpParams p = small_dgp(NoiseRegime::kComplex);
  const LatentBatch b = sample_latents(p, 200, derive_key(9, "cx"));
  std::size_t resampled = 0;
  for (std::size_t i = 0; i < b.c.size(); ++i) {
    if (b.iota[i] == 0.0) {
      CHECK(b.c_pos[i] == b.c[i]);
    } else {
      ++resampled;
    }
  }
  CHECK(resampled > 0);
  CHECK(resampled < b.c.size());
}

TEST_CASE("mix produces observations of the latent dimension") {
  const DgpParams p = small_dgp(NoiseRegime::kHeteroscedastic);
  const LatentBatch b = sample_latents(p, 8, derive_key(2, "mix"));
  const PairBatch x = mix(b, p.mixing);
  CHECK(x.x.rows() == 8);
  CHECK(x.x.cols() == p.n());
  CHECK(x.x_pos.cols() == p.n());
}

TEST_CASE("batch export writes one row per sample") {
  const DgpParams p = small_dgp(NoiseRegime::kHeteroscedastic);
  const LatentBatch b = sample_latents(p, 7, derive_key(2, "csv"));
  const std::string path =
      (std::filesystem::temp_directory_path() / "adassl_test_batch.csv").string();
  export_batch_csv(b, mix(b, p.mixing), path);
  std::ifstream is(path);
  std::string line;
  std::size_t lines = 0;
  while (std::getline(is, line)) ++lines;
  CHECK(lines == 8);  // header + rows
  std::filesystem::remove(path);
  CHECK_THROWS_AS(export_batch_csv(b, mix(b, p.mixing), "/nonexistent/dir/x.csv"), Error);
}

TEST_CASE("heteroscedasticity probe on an affine map reports a flat ratio") {
  const Eigen::MatrixXd a = Eigen::MatrixXd::Random(4, 3);
  VectorMap h = [&](const Eigen::VectorXd& z) { return Eigen::VectorXd(a * z); };
  std::vector<Eigen::VectorXd> zs;
  for (int i = 0; i < 20; ++i) zs.push_back(Eigen::VectorXd::Random(3));
  const auto rep = heteroscedasticity_probe(h, zs, Eigen::MatrixXd::Identity(3, 3));
  CHECK(rep.used == 20);
  CHECK(rep.frobenius_ratio == doctest::Approx(1.0).epsilon(1e-6));
}
