// Copyright 2026 The gmfbo Authors
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

// Exact Gaussian-process regression.
//
// Targets are standardized (population std) and modeled with a zero prior
// mean in standardized units. Covariance matrices receive a 1e-8 diagonal
// jitter that is doubled up to 1e-4 when the Cholesky factorization fails.
// Posterior solves are refined against the unjittered matrix, so predictions
// follow the exact covariance whenever it is numerically invertible.

#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>
#include <string_view>
#include <utility>
#include <vector>

#include "gmfbo/errors.hpp"
#include "gmfbo/kernel.hpp"

namespace gmfbo {

template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

// --------------------------------------------------------------------------
// Standardization

template <typename Scalar>
struct Standardization {
  static constexpr Scalar kStdFloor = Scalar(1e-12);

  Scalar mean = Scalar(0);
  Scalar std = Scalar(1);

  VectorX<Scalar> apply(const VectorX<Scalar>& v) const {
    return (v.array() - mean) / std;
  }
  VectorX<Scalar> invert(const VectorX<Scalar>& v) const {
    return v.array() * std + mean;
  }
};

/// Zero-mean, unit-variance copy of `targets`. Uses the population standard
/// deviation, floored at 1e-12 for constant inputs.
template <typename Scalar>
std::pair<VectorX<Scalar>, Standardization<Scalar>> standardize(const VectorX<Scalar>& targets) {
  Standardization<Scalar> s;
  if (targets.size() == 0) return {targets, s};
  s.mean = targets.mean();
  const Scalar var = (targets.array() - s.mean).square().mean();
  s.std = std::sqrt(var);
  if (!(s.std > Standardization<Scalar>::kStdFloor)) s.std = Standardization<Scalar>::kStdFloor;
  return {s.apply(targets), s};
}

template <typename Scalar>
VectorX<Scalar> destandardize(const VectorX<Scalar>& standardized, const Standardization<Scalar>& s) {
  return s.invert(standardized);
}

// --------------------------------------------------------------------------
// Factorization

template <typename Scalar>
class JitteredCholesky {
 public:
  static constexpr double kInitialJitter = 1e-8;
  static constexpr double kMaxJitter = 1e-4;

  /// Returns false when no jitter up to kMaxJitter makes `a` factorizable.
  bool compute(const MatrixX<Scalar>& a) {
    const auto n = a.rows();
    for (double jitter = kInitialJitter; jitter <= kMaxJitter * (1 + 1e-12); jitter *= 2) {
      llt_.compute(a + Scalar(jitter) * MatrixX<Scalar>::Identity(n, n));
      if (llt_.info() == Eigen::Success && llt_.matrixLLT().diagonal().allFinite() &&
          (llt_.matrixLLT().diagonal().array() > Scalar(0)).all()) {
        jitter_ = Scalar(jitter);
        return true;
      }
    }
    return false;
  }

  const Eigen::LLT<MatrixX<Scalar>>& llt() const { return llt_; }
  Scalar jitter() const { return jitter_; }
  Scalar log_det() const {
    return Scalar(2) * llt_.matrixLLT().diagonal().array().log().sum();
  }

 private:
  Eigen::LLT<MatrixX<Scalar>> llt_;
  Scalar jitter_ = Scalar(0);
};

/// Gaussian log evidence log N(y | 0, cov) of already standardized targets.
template <typename Scalar>
Scalar log_evidence(const MatrixX<Scalar>& cov, const VectorX<Scalar>& y,
                    std::span<const double> params = {}) {
  JitteredCholesky<Scalar> chol;
  if (!chol.compute(cov))
    throw NumericalFailure("covariance not positive definite at maximum jitter",
                           std::vector<double>(params.begin(), params.end()));
  const VectorX<Scalar> alpha = chol.llt().solve(y);
  const auto n = static_cast<Scalar>(y.size());
  return Scalar(-0.5) * y.dot(alpha) - Scalar(0.5) * chol.log_det() -
         Scalar(0.5) * n * std::log(Scalar(2) * std::numbers::pi_v<Scalar>);
}

template <typename Scalar>
struct Prediction {
  Scalar mean;
  Scalar variance;
};

// --------------------------------------------------------------------------
// Multi-source surrogate

enum class Source : std::uint8_t { kIS1, kIS2, kIS3 };

std::string_view to_string(Source source);

template <typename Scalar>
struct SurrogateDataset {
  std::vector<AugmentedInput<Scalar>> points;
  std::vector<Scalar> targets;
  std::vector<Source> sources;

  void add(const AugmentedInput<Scalar>& z, Scalar target, Source source) {
    points.push_back(z);
    targets.push_back(target);
    sources.push_back(source);
  }
  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }
  VectorX<Scalar> target_vector() const {
    return Eigen::Map<const VectorX<Scalar>>(targets.data(), static_cast<Eigen::Index>(targets.size()));
  }
};

template <typename Scalar>
std::vector<double> to_param_vector(const KernelHyperparams<Scalar>& hp) {
  return {double(hp.l0), double(hp.l1), double(hp.sigma0_sq), double(hp.sigma1_sq),
          double(hp.p), double(hp.noise_var)};
}

template <typename Scalar>
MatrixX<Scalar> noisy_gram(const SurrogateDataset<Scalar>& data, const KernelHyperparams<Scalar>& hp,
                           const FidelityState<Scalar>& fs) {
  MatrixX<Scalar> cov = gram_matrix<Scalar>(data.points, hp, fs);
  cov.diagonal().array() += hp.noise_var;
  return cov;
}

/// Log marginal likelihood of the standardized targets.
template <typename Scalar>
Scalar log_marginal_likelihood(const SurrogateDataset<Scalar>& data,
                               const KernelHyperparams<Scalar>& hp,
                               const FidelityState<Scalar>& fs) {
  if (data.empty()) throw Error("log_marginal_likelihood: empty dataset");
  validate(hp);
  const auto [y, scaling] = standardize<Scalar>(data.target_vector());
  const auto params = to_param_vector(hp);
  return log_evidence<Scalar>(noisy_gram(data, hp, fs), y, params);
}

/// Posterior of the composite-kernel GP. Immutable once constructed.
template <typename Scalar>
class PosteriorGP {
 public:
  PosteriorGP(SurrogateDataset<Scalar> data, KernelHyperparams<Scalar> hp, FidelityState<Scalar> fs)
      : data_(std::move(data)), hp_(hp), fs_(fs) {
    if (data_.empty()) throw Error("PosteriorGP: empty dataset");
    validate(hp_);
    auto [y, scaling] = standardize<Scalar>(data_.target_vector());
    scaling_ = scaling;
    cov_ = noisy_gram(data_, hp_, fs_);
    const MatrixX<Scalar>& cov = cov_;
    if (!chol_.compute(cov))
      throw NumericalFailure("surrogate covariance not positive definite", to_param_vector(hp_));
    alpha_ = chol_.llt().solve(y);
    // Refine against the unjittered covariance so the mean is not biased by
    // the jitter; a step is kept only if it shrinks the residual.
    VectorX<Scalar> residual = y - cov * alpha_;
    for (int step = 0; step < 2; ++step) {
      const VectorX<Scalar> next = alpha_ + chol_.llt().solve(residual);
      const VectorX<Scalar> next_residual = y - cov * next;
      if (!(next_residual.norm() < residual.norm())) break;
      alpha_ = next;
      residual = next_residual;
    }
  }

  /// Posterior mean and variance in raw objective units.
  Prediction<Scalar> predict(const AugmentedInput<Scalar>& z) const {
    const VectorX<Scalar> c = cross_covariance<Scalar>(data_.points, z, hp_, fs_);
    const Scalar prior = composite_kernel(z, z, hp_, fs_);
    const Scalar mean_s = c.dot(alpha_);
    VectorX<Scalar> w = chol_.llt().solve(c);
    const VectorX<Scalar> residual = c - cov_ * w;
    const VectorX<Scalar> refined = w + chol_.llt().solve(residual);
    if ((c - cov_ * refined).norm() < residual.norm()) w = refined;
    Scalar var_s = prior - c.dot(w);
    var_s = std::min(prior, std::max(Scalar(0), var_s));
    return {scaling_.mean + scaling_.std * mean_s, scaling_.std * scaling_.std * var_s};
  }

  const SurrogateDataset<Scalar>& dataset() const { return data_; }
  const KernelHyperparams<Scalar>& hyperparams() const { return hp_; }
  const FidelityState<Scalar>& fidelity_state() const { return fs_; }
  const Standardization<Scalar>& standardization() const { return scaling_; }
  Scalar jitter() const { return chol_.jitter(); }

 private:
  SurrogateDataset<Scalar> data_;
  KernelHyperparams<Scalar> hp_;
  FidelityState<Scalar> fs_;
  Standardization<Scalar> scaling_;
  MatrixX<Scalar> cov_;
  JitteredCholesky<Scalar> chol_;
  VectorX<Scalar> alpha_;
};

// --------------------------------------------------------------------------
// Hyperparameter fitting (MAP, multi-start, log space)

struct HyperPriors {
  double lengthscale_median = 0.5;
  double lengthscale_log_std = 1.0;
  Interval<double> lengthscale{0.01, 10.0};
  Interval<double> variance{0.01, 20.0};
  Interval<double> exponent{0.0, 5.0};
  Interval<double> noise{1e-6, 2.0};
  int restarts = 8;
  int max_iterations = 60;
  /// Fit only l0, sigma0_sq and noise; the remaining entries stay at their
  /// prior medians. Used by single-source models.
  bool single_source = false;
};

struct FitResult {
  KernelHyperparams<double> hyperparams;
  double objective = 0.0;
  /// All starts failed; `hyperparams` holds the prior-median fallback.
  bool fallback = false;
  int failed_starts = 0;
};

KernelHyperparams<double> prior_median(const HyperPriors& priors);

/// Best of `priors.restarts` projected-BFGS ascents of log evidence plus the
/// log-normal lengthscale priors. Deterministic given `seed`.
FitResult fit_hyperparameters(const SurrogateDataset<double>& data, const FidelityState<double>& fs,
                              const HyperPriors& priors, std::uint64_t seed);

// --------------------------------------------------------------------------
// ARD Matern-5/2 regressor over generic inputs

template <typename Scalar>
struct MaternHyperparams {
  VectorX<Scalar> lengthscales;
  Scalar signal_var = Scalar(1);
  Scalar noise_var = Scalar(1e-4);
};

/// Covariance between the rows of `a` and `b`.
template <typename Scalar>
MatrixX<Scalar> ard_matern52(const MatrixX<Scalar>& a, const MatrixX<Scalar>& b,
                             const MaternHyperparams<Scalar>& hp) {
  if (!(hp.lengthscales.array() > Scalar(0)).all() || !hp.lengthscales.allFinite())
    throw InvalidHyperparameter("Matern lengthscales must be finite and positive");
  const VectorX<Scalar> inv_l = hp.lengthscales.cwiseInverse();
  const MatrixX<Scalar> sa = a * inv_l.asDiagonal();
  const MatrixX<Scalar> sb = b * inv_l.asDiagonal();
  MatrixX<Scalar> d2 = (-2 * sa * sb.transpose()).eval();
  d2.colwise() += sa.rowwise().squaredNorm();
  d2.rowwise() += sb.rowwise().squaredNorm().transpose();
  const auto r = d2.array().max(Scalar(0)).sqrt() * std::sqrt(Scalar(5));
  return (hp.signal_var * (Scalar(1) + r + r.square() / Scalar(3)) * (-r).exp()).matrix();
}

template <typename Scalar>
Scalar matern_log_marginal_likelihood(const MatrixX<Scalar>& x, const VectorX<Scalar>& y_standardized,
                                      const MaternHyperparams<Scalar>& hp) {
  MatrixX<Scalar> cov = ard_matern52(x, x, hp);
  cov.diagonal().array() += hp.noise_var;
  std::vector<double> params(hp.lengthscales.data(), hp.lengthscales.data() + hp.lengthscales.size());
  params.push_back(double(hp.signal_var));
  params.push_back(double(hp.noise_var));
  return log_evidence<Scalar>(cov, y_standardized, params);
}

/// GP over rows of `x` with standardized targets and zero prior mean.
template <typename Scalar>
class MaternRegressor {
 public:
  MaternRegressor() = default;
  MaternRegressor(MatrixX<Scalar> x, const VectorX<Scalar>& y, MaternHyperparams<Scalar> hp)
      : x_(std::move(x)), hp_(std::move(hp)) {
    auto [ys, scaling] = standardize<Scalar>(y);
    scaling_ = scaling;
    MatrixX<Scalar> cov = ard_matern52(x_, x_, hp_);
    cov.diagonal().array() += hp_.noise_var;
    if (!chol_.compute(cov)) throw NumericalFailure("regressor covariance not positive definite", {});
    alpha_ = chol_.llt().solve(ys);
  }

  /// Latent means and variances (raw target units) at the rows of `query`.
  std::pair<VectorX<Scalar>, VectorX<Scalar>> predict(const MatrixX<Scalar>& query) const {
    const MatrixX<Scalar> cross = ard_matern52(query, x_, hp_);
    VectorX<Scalar> mean = (cross * alpha_).array() * scaling_.std + scaling_.mean;
    MatrixX<Scalar> v = cross.transpose();
    chol_.llt().matrixL().solveInPlace(v);
    VectorX<Scalar> var_s = (hp_.signal_var - v.colwise().squaredNorm().transpose().array())
                                .max(Scalar(0))
                                .min(hp_.signal_var);
    return {std::move(mean), var_s * (scaling_.std * scaling_.std)};
  }

  const MaternHyperparams<Scalar>& hyperparams() const { return hp_; }
  const Standardization<Scalar>& standardization() const { return scaling_; }
  Eigen::Index size() const { return x_.rows(); }

 private:
  MatrixX<Scalar> x_;
  MaternHyperparams<Scalar> hp_;
  Standardization<Scalar> scaling_;
  MatrixX<Scalar> cov_;
  JitteredCholesky<Scalar> chol_;
  VectorX<Scalar> alpha_;
};

struct MaternPriors {
  double lengthscale_median = 1.0;
  double lengthscale_log_std = 1.0;
  Interval<double> lengthscale{0.1, 20.0};
  Interval<double> variance{0.01, 100.0};
  Interval<double> noise{1e-4, 2.0};
  int restarts = 3;
  int max_iterations = 40;
  /// Hyperparameters are fitted on an evenly strided subset of at most this
  /// many rows; the posterior still conditions on every row.
  int fit_rows = 100;
};

struct MaternFit {
  MaternHyperparams<double> hyperparams;
  double objective = 0.0;
  bool fallback = false;
};

MaternFit fit_matern_hyperparameters(const MatrixX<double>& x, const VectorX<double>& y,
                                     const MaternPriors& priors, std::uint64_t seed);

}  // namespace gmfbo
