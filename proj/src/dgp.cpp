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

#include "adassl/dgp.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>

#include "adassl/error.hpp"

namespace adassl {

const char* regime_name(NoiseRegime regime) {
  switch (regime) {
    case NoiseRegime::kZero: return "zero";
    case NoiseRegime::kIsotropic: return "isotropic";
    case NoiseRegime::kAnisotropic: return "anisotropic";
    case NoiseRegime::kHeteroscedastic: return "heteroscedastic";
    case NoiseRegime::kComplex: return "complex";
  }
  return "unknown";
}

NoiseRegime parse_regime(std::string_view name) {
  for (NoiseRegime r : {NoiseRegime::kZero, NoiseRegime::kIsotropic, NoiseRegime::kAnisotropic,
                        NoiseRegime::kHeteroscedastic, NoiseRegime::kComplex}) {
    if (name == regime_name(r)) return r;
  }
  fail(ErrorKind::kConfig, "unknown noise regime '" + std::string(name) + "'");
}

const char* weight_normalization_name(WeightNormalization w) {
  return w == WeightNormalization::kRows ? "rows" : "matrix";
}

WeightNormalization parse_weight_normalization(std::string_view name) {
  if (name == "rows") return WeightNormalization::kRows;
  if (name == "matrix") return WeightNormalization::kMatrix;
  fail(ErrorKind::kConfig, "unknown weight normalization '" + std::string(name) + "'");
}

double inverse_softplus_one() { return std::log(std::exp(1.0) - 1.0); }

Eigen::MatrixXd to_eigen(const Tensor& t) {
  Eigen::MatrixXd m(t.rows(), t.cols());
  for (std::size_t r = 0; r < t.rows(); ++r) {
    for (std::size_t c = 0; c < t.cols(); ++c) m(r, c) = t.at(r, c);
  }
  return m;
}

Tensor from_eigen(const Eigen::MatrixXd& m) {
  Tensor t(Shape{static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols())});
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) t.at(r, c) = m(r, c);
  }
  return t;
}

// ---- mixing -------------------------------------------------------------------

double condition_number(const Eigen::MatrixXd& m) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
  const auto& s = svd.singularValues();
  const double smin = s(s.size() - 1);
  if (smin <= 0.0) return std::numeric_limits<double>::infinity();
  return s(0) / smin;
}

void normalize_weights(Eigen::MatrixXd& m, WeightNormalization mode) {
  if (mode == WeightNormalization::kRows) {
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      const double n = m.row(r).norm();
      if (n > 0.0) m.row(r) /= n;
    }
  } else {
    const double n = m.norm();
    if (n > 0.0) m /= n;
  }
}

std::size_t select_min_condition(std::span<const Eigen::MatrixXd> pool) {
  if (pool.empty()) fail(ErrorKind::kDimension, "empty candidate pool");
  std::size_t best = 0;
  double best_cond = condition_number(pool[0]);
  for (std::size_t i = 1; i < pool.size(); ++i) {
    const double c = condition_number(pool[i]);
    if (c < best_cond) {
      best_cond = c;
      best = i;
    }
  }
  return best;
}

MixingMlp build_mixing(std::size_t n, RngKey key, WeightNormalization mode,
                       std::size_t candidates) {
  if (n < 2) fail(ErrorKind::kConfig, "mixing dimension must be at least 2");
  if (candidates == 0) fail(ErrorKind::kConfig, "mixing candidate pool is empty");
  MixingMlp g;
  g.candidates_per_layer = candidates;
  for (std::size_t layer = 0; layer < 3; ++layer) {
    RngStream rng(derive_key(key, layer));
    Eigen::MatrixXd best;
    double best_cond = std::numeric_limits<double>::infinity();
    Eigen::MatrixXd cand(n, n);
    for (std::size_t k = 0; k < candidates; ++k) {
      for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t c = 0; c < n; ++c) cand(r, c) = rng.normal();
      }
      normalize_weights(cand, mode);
      const double cond = condition_number(cand);
      if (cond < best_cond) {
        best_cond = cond;
        best = cand;
      }
    }
    g.weights[layer] = best;
    g.biases[layer] = Eigen::VectorXd::Zero(n);
    g.condition_numbers[layer] = best_cond;
  }
  return g;
}

Tensor MixingMlp::apply(const Tensor& z) const {
  if (z.cols() != dim()) {
    fail(ErrorKind::kDimension, "mixing expects " + std::to_string(dim()) + " latent columns");
  }
  Eigen::MatrixXd h = to_eigen(z);
  for (std::size_t layer = 0; layer < 3; ++layer) {
    h = (h * weights[layer].transpose()).rowwise() + biases[layer].transpose();
    if (layer < 2) h = h.unaryExpr([s = slope](double v) { return v >= 0.0 ? v : s * v; });
  }
  return from_eigen(h);
}

// ---- covariance -----------------------------------------------------------------

Eigen::MatrixXd sample_inverse_wishart(std::size_t p, double df, RngStream& rng) {
  if (df <= static_cast<double>(p) - 1.0) {
    fail(ErrorKind::kConfig, "inverse-Wishart degrees of freedom too small");
  }
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(p, p);
  for (std::size_t i = 0; i < p; ++i) {
    a(i, i) = std::sqrt(rng.chi_squared(df - static_cast<double>(i)));
    for (std::size_t j = 0; j < i; ++j) a(i, j) = rng.normal();
  }
  // W = A A^T, so W^{-1} = A^{-T} A^{-1}.
  const Eigen::MatrixXd identity = Eigen::MatrixXd::Identity(p, p);
  const Eigen::MatrixXd a_inv =
      a.triangularView<Eigen::Lower>().solve(identity);
  Eigen::MatrixXd out = a_inv.transpose() * a_inv;
  return 0.5 * (out + out.transpose());
}

Eigen::MatrixXd sample_sigma(std::size_t n_c, RngKey key) {
  if (n_c < 1) fail(ErrorKind::kConfig, "n_c must be at least 1");
  constexpr int kMaxAttempts = 16;
  for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
    RngStream rng(derive_key(key, static_cast<std::uint64_t>(attempt)));
    Eigen::MatrixXd s = sample_inverse_wishart(n_c, static_cast<double>(n_c + 2), rng);
    Eigen::LLT<Eigen::MatrixXd> llt(s);
    if (llt.info() == Eigen::Success && s.allFinite()) return s;
  }
  fail(ErrorKind::kNumeric, "could not draw an SPD covariance");
}

DgpParams make_dgp(const DgpConfig& config, RngKey key) {
  if (config.n_c < 1) fail(ErrorKind::kConfig, "dgp.n_c must be >= 1");
  DgpParams p;
  p.n_c = config.n_c;
  p.n_s = config.n_s;
  p.regime = config.regime;
  p.sigma = sample_sigma(p.n_c, derive_key(key, "sigma"));
  p.sigma_chol = Eigen::LLT<Eigen::MatrixXd>(p.sigma).matrixL();

  RngStream rng(derive_key(key, "conditional"));
  const std::size_t nc = p.n_c;
  p.sigma_sq = Eigen::VectorXd::Ones(nc);
  if (p.regime == NoiseRegime::kAnisotropic) {
    for (std::size_t i = 0; i < nc; ++i) p.sigma_sq(i) = 1.0 / rng.gamma(2.0);
  }
  p.w_sigma = Eigen::MatrixXd::Zero(nc, nc);
  p.w_mu = Eigen::MatrixXd::Zero(nc, nc);
  p.b = Eigen::VectorXd::Zero(nc);
  if (p.regime == NoiseRegime::kHeteroscedastic || p.regime == NoiseRegime::kComplex) {
    for (std::size_t i = 0; i < nc; ++i) {
      for (std::size_t j = 0; j < nc; ++j) p.w_sigma(i, j) = rng.normal();
    }
  }
  if (p.regime == NoiseRegime::kComplex) {
    for (std::size_t i = 0; i < nc; ++i) {
      for (std::size_t j = 0; j < nc; ++j) p.w_mu(i, j) = rng.normal();
    }
    for (std::size_t i = 0; i < nc; ++i) p.b(i) = rng.normal();
  }
  p.mixing = build_mixing(p.n(), derive_key(key, "mixing"), config.weight_normalization,
                          config.mixing_candidates);
  return p;
}

// ---- sampling ----------------------------------------------------------------------

namespace {

Eigen::VectorXd correlated_normal(const DgpParams& p, RngStream& rng) {
  Eigen::VectorXd e(p.n_c);
  for (std::size_t i = 0; i < p.n_c; ++i) e(i) = rng.normal();
  return p.sigma_chol * e;
}

Eigen::VectorXd softplus_shifted(const Eigen::VectorXd& a) {
  Eigen::VectorXd out(a.size());
  const double shift = inverse_softplus_one();
  for (Eigen::Index i = 0; i < a.size(); ++i) out(i) = softplus_value(a(i) + shift);
  return out;
}

// Unimodal conditional: c+_i ~ N(c_i, sigma(c)_i^2).
Eigen::VectorXd positive_row(const DgpParams& p, const Eigen::VectorXd& c, RngStream& rng) {
  Eigen::VectorXd var;
  switch (p.regime) {
    case NoiseRegime::kZero:
      return c;
    case NoiseRegime::kIsotropic:
      var = Eigen::VectorXd::Ones(p.n_c);
      break;
    case NoiseRegime::kAnisotropic:
      var = p.sigma_sq;
      break;
    case NoiseRegime::kHeteroscedastic:
      var = softplus_shifted(p.w_sigma * c);
      break;
    case NoiseRegime::kComplex:
      fail(ErrorKind::kConfig, "complex regime draws c+ jointly with kappa");
  }
  Eigen::VectorXd out(p.n_c);
  for (std::size_t i = 0; i < p.n_c; ++i) out(i) = c(i) + std::sqrt(var(i)) * rng.normal();
  return out;
}

void write_row(Tensor& t, std::size_t r, const Eigen::VectorXd& v) {
  for (Eigen::Index i = 0; i < v.size(); ++i) t.at(r, i) = v(i);
}

void fill_normal_row(Tensor& t, std::size_t r, RngStream& rng, double stddev = 1.0) {
  for (std::size_t i = 0; i < t.cols(); ++i) t.at(r, i) = stddev * rng.normal();
}

Tensor hcat(const Tensor& a, const Tensor& b) {
  Tensor out(Shape{a.rows(), a.cols() + b.cols()});
  for (std::size_t r = 0; r < a.rows(); ++r) {
    for (std::size_t c = 0; c < a.cols(); ++c) out.at(r, c) = a.at(r, c);
    for (std::size_t c = 0; c < b.cols(); ++c) out.at(r, a.cols() + c) = b.at(r, c);
  }
  return out;
}

}  // namespace

Tensor LatentBatch::z() const { return hcat(c, s); }
Tensor LatentBatch::z_pos() const { return hcat(c_pos, s_pos); }
Tensor LatentBatch::z_pp() const { return hcat(c_pos, s_pp); }

LatentBatch sample_latents(const DgpParams& p, std::size_t batch, RngKey key) {
  const std::size_t nc = p.n_c, ns = p.n_s;
  LatentBatch out;
  out.c = Tensor(Shape{batch, nc});
  out.c_pos = Tensor(Shape{batch, nc});
  out.s = Tensor(Shape{batch, ns});
  out.s_pos = Tensor(Shape{batch, ns});
  out.s_pp = Tensor(Shape{batch, ns});
  const bool complex = p.regime == NoiseRegime::kComplex;
  if (complex) {
    out.kappa = Tensor(Shape{batch, nc});
    out.iota = Tensor(Shape{batch, nc});
  }
  for (std::size_t i = 0; i < batch; ++i) {
    RngStream rng(derive_key(key, i));
    if (!complex) {
      const Eigen::VectorXd c = correlated_normal(p, rng);
      write_row(out.c, i, c);
      write_row(out.c_pos, i, positive_row(p, c, rng));
    } else {
      const Eigen::VectorXd kappa = correlated_normal(p, rng);
      const Eigen::VectorXd mu = p.w_mu.transpose() * kappa + p.b;
      const Eigen::VectorXd sd = softplus_shifted(p.w_sigma * kappa).cwiseSqrt();
      for (std::size_t d = 0; d < nc; ++d) {
        const double c = mu(d) + sd(d) * rng.normal();
        const double pi = sigmoid_value(kappa(d) / p.sigma(d, d) - 1.0);
        const bool resample = rng.uniform() < pi;
        const double fresh = mu(d) + sd(d) * rng.normal();
        out.kappa.at(i, d) = kappa(d);
        out.c.at(i, d) = c;
        out.iota.at(i, d) = resample ? 1.0 : 0.0;
        out.c_pos.at(i, d) = resample ? fresh : c;
      }
    }
    fill_normal_row(out.s, i, rng);
    fill_normal_row(out.s_pos, i, rng);
    fill_normal_row(out.s_pp, i, rng);
  }
  return out;
}

Tensor sample_positive(const DgpParams& p, const Tensor& c, RngKey key) {
  if (c.cols() != p.n_c) fail(ErrorKind::kDimension, "sample_positive: c has wrong width");
  Tensor out(Shape{c.rows(), p.n_c});
  for (std::size_t i = 0; i < c.rows(); ++i) {
    RngStream rng(derive_key(key, i));
    Eigen::VectorXd row(p.n_c);
    for (std::size_t d = 0; d < p.n_c; ++d) row(d) = c.at(i, d);
    write_row(out, i, positive_row(p, row, rng));
  }
  return out;
}

LatentBatch eval_distribution(const DgpParams& p, EvalKind kind, std::size_t batch,
                              RngKey key) {
  if (kind == EvalKind::kTrain) {
    LatentBatch full = sample_latents(p, batch, key);
    LatentBatch out;
    out.c = std::move(full.c);
    out.s = std::move(full.s);
    return out;
  }
  LatentBatch out;
  out.c = Tensor(Shape{batch, p.n_c});
  out.s = Tensor(Shape{batch, p.n_s});
  const double sd = std::sqrt(kWideVariance);
  for (std::size_t i = 0; i < batch; ++i) {
    RngStream rng(derive_key(key, i));
    fill_normal_row(out.c, i, rng, sd);
    fill_normal_row(out.s, i, rng, sd);
  }
  return out;
}

PairBatch mix(const LatentBatch& latents, const MixingMlp& g) {
  PairBatch out;
  out.x = g.apply(latents.z());
  if (!latents.c_pos.empty()) {
    out.x_pos = g.apply(latents.z_pos());
    out.x_pp = g.apply(latents.z_pp());
  }
  return out;
}

void export_batch_csv(const LatentBatch& latents, const PairBatch& pairs,
                      const std::string& path) {
  std::ofstream os(path);
  if (!os) fail(ErrorKind::kIo, "cannot open '" + path + "' for writing");
  const Tensor z = latents.z();
  const bool has_pos = !latents.c_pos.empty();
  const Tensor zp = has_pos ? latents.z_pos() : Tensor();
  auto header = [&](const char* prefix, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) os << ',' << prefix << i;
  };
  os << "row";
  header("z_", z.cols());
  if (has_pos) header("z_pos_", zp.cols());
  header("x_", pairs.x.cols());
  if (has_pos) {
    header("x_pos_", pairs.x_pos.cols());
    header("x_pp_", pairs.x_pp.cols());
  }
  os << '\n';
  char buf[32];
  auto emit = [&](const Tensor& t, std::size_t r) {
    for (std::size_t c = 0; c < t.cols(); ++c) {
      std::snprintf(buf, sizeof(buf), "%.17g", t.at(r, c));
      os << ',' << buf;
    }
  };
  for (std::size_t r = 0; r < z.rows(); ++r) {
    os << r;
    emit(z, r);
    if (has_pos) emit(zp, r);
    emit(pairs.x, r);
    if (has_pos) {
      emit(pairs.x_pos, r);
      emit(pairs.x_pp, r);
    }
    os << '\n';
  }
  if (!os) fail(ErrorKind::kIo, "failed writing '" + path + "'");
}

// ---- heteroscedasticity probe ----------------------------------------------------------

HeteroscedasticityReport heteroscedasticity_probe(const VectorMap& h,
                                                  const std::vector<Eigen::VectorXd>& z_samples,
                                                  const Eigen::MatrixXd& sigma, double step) {
  HeteroscedasticityReport report;
  for (std::size_t k = 0; k < z_samples.size(); ++k) {
    const Eigen::VectorXd& z = z_samples[k];
    const Eigen::Index d = z.size();
    if (sigma.rows() != d || sigma.cols() != d) {
      fail(ErrorKind::kDimension, "heteroscedasticity_probe: Sigma does not match z");
    }
    Eigen::MatrixXd jac;
    for (Eigen::Index j = 0; j < d; ++j) {
      Eigen::VectorXd zp = z, zm = z;
      zp(j) += step;
      zm(j) -= step;
      const Eigen::VectorXd col = (h(zp) - h(zm)) / (2.0 * step);
      if (j == 0) jac.resize(col.size(), d);
      jac.col(j) = col;
    }
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(jac);
    const auto& sv = svd.singularValues();
    Eigen::Index rank = 0;
    for (Eigen::Index i = 0; i < sv.size(); ++i) {
      if (sv(i) > 1e-8 * std::max(sv(0), 1e-300)) ++rank;
    }
    if (rank < d) {
      ++report.excluded;
      report.warnings.push_back("sample " + std::to_string(k) +
                                ": rank-deficient Jacobian, excluded");
      continue;
    }
    const Eigen::MatrixXd cov = jac * sigma * jac.transpose();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov, Eigen::EigenvaluesOnly);
    report.frobenius_norms.push_back(cov.norm());
    report.leading_eigenvalues.push_back(eig.eigenvalues().maxCoeff());
    ++report.used;
  }
  auto ratio = [](const std::vector<double>& v) {
    if (v.empty()) return 0.0;
    const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
    return *hi / *lo;
  };
  report.frobenius_ratio = ratio(report.frobenius_norms);
  report.eigenvalue_ratio = ratio(report.leading_eigenvalues);
  return report;
}

}  // namespace adassl
