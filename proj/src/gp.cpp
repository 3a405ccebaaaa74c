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

#include "gmfbo/gp.hpp"

#include <cmath>
#include <limits>

#include "gmfbo/design.hpp"
#include "gmfbo/optimize.hpp"

namespace gmfbo {

std::string_view to_string(Source source) {
  switch (source) {
    case Source::kIS1: return "IS1";
    case Source::kIS2: return "IS2";
    case Source::kIS3: return "IS3";
  }
  return "?";
}

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double log_normal_prior(double log_value, double median, double log_std) {
  const double z = (log_value - std::log(median)) / log_std;
  return -0.5 * z * z;
}

// Parameter vector layout: full model
//   [log l0, log l1, log sigma0_sq, log sigma1_sq, p, log noise]
// single-source model
//   [log l0, log sigma0_sq, log noise]
struct SurrogateParams {
  const HyperPriors& priors;

  Eigen::Index dim() const { return priors.single_source ? 3 : 6; }

  KernelHyperparams<double> decode(const Eigen::VectorXd& theta) const {
    KernelHyperparams<double> hp = prior_median(priors);
    if (priors.single_source) {
      hp.l0 = std::exp(theta(0));
      hp.sigma0_sq = std::exp(theta(1));
      hp.noise_var = std::exp(theta(2));
    } else {
      hp.l0 = std::exp(theta(0));
      hp.l1 = std::exp(theta(1));
      hp.sigma0_sq = std::exp(theta(2));
      hp.sigma1_sq = std::exp(theta(3));
      hp.p = theta(4);
      hp.noise_var = std::exp(theta(5));
    }
    return hp;
  }

  optim::Box box() const {
    const auto& p = priors;
    optim::Box b;
    if (p.single_source) {
      b.lower = Eigen::Vector3d(std::log(p.lengthscale.lo), std::log(p.variance.lo), std::log(p.noise.lo));
      b.upper = Eigen::Vector3d(std::log(p.lengthscale.hi), std::log(p.variance.hi), std::log(p.noise.hi));
    } else {
      b.lower.resize(6);
      b.upper.resize(6);
      b.lower << std::log(p.lengthscale.lo), std::log(p.lengthscale.lo), std::log(p.variance.lo),
          std::log(p.variance.lo), p.exponent.lo, std::log(p.noise.lo);
      b.upper << std::log(p.lengthscale.hi), std::log(p.lengthscale.hi), std::log(p.variance.hi),
          std::log(p.variance.hi), p.exponent.hi, std::log(p.noise.hi);
    }
    return b;
  }

  Eigen::VectorXd draw_start(Rng& rng) const {
    const auto& p = priors;
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    auto lengthscale = [&] { return std::log(p.lengthscale_median) + p.lengthscale_log_std * normal(rng); };
    auto variance = [&] { return normal(rng); };  // log-normal around 1
    auto noise = [&] { return std::log(1e-4) + unit(rng) * (std::log(1e-1) - std::log(1e-4)); };
    Eigen::VectorXd theta(dim());
    if (p.single_source) {
      theta << lengthscale(), variance(), noise();
    } else {
      const double l0 = lengthscale();
      const double l1 = lengthscale();
      const double v0 = variance();
      const double v1 = variance();
      const double exponent = p.exponent.lo + unit(rng) * (p.exponent.hi - p.exponent.lo);
      theta << l0, l1, v0, v1, exponent, noise();
    }
    return box().project(theta);
  }

  double log_prior(const KernelHyperparams<double>& hp) const {
    double lp = log_normal_prior(std::log(hp.l0), priors.lengthscale_median, priors.lengthscale_log_std);
    if (!priors.single_source)
      lp += log_normal_prior(std::log(hp.l1), priors.lengthscale_median, priors.lengthscale_log_std);
    return lp;
  }
};

}  // namespace

KernelHyperparams<double> prior_median(const HyperPriors& priors) {
  KernelHyperparams<double> hp;
  hp.l0 = priors.lengthscale_median;
  hp.l1 = priors.lengthscale_median;
  hp.sigma0_sq = 1.0;
  hp.sigma1_sq = 1.0;
  hp.p = 1.0;
  hp.noise_var = 1e-2;
  return hp;
}

FitResult fit_hyperparameters(const SurrogateDataset<double>& data, const FidelityState<double>& fs,
                              const HyperPriors& priors, std::uint64_t seed) {
  if (data.size() < 2) throw Error("fit_hyperparameters: need at least 2 points");

  const SurrogateParams params{priors};
  const optim::Box box = params.box();
  const auto [y, scaling] = standardize<double>(data.target_vector());
  const VectorX<double> targets = y;

  const optim::Objective objective = [&](const Eigen::VectorXd& theta) {
    const KernelHyperparams<double> hp = params.decode(theta);
    try {
      MatrixX<double> cov = noisy_gram(data, hp, fs);
      return log_evidence<double>(cov, targets) + params.log_prior(hp);
    } catch (const Error&) {
      return kNegInf;
    }
  };

  Rng rng(seed);
  optim::BfgsOptions options;
  options.max_iterations = priors.max_iterations;

  FitResult best;
  best.objective = kNegInf;
  bool found = false;
  for (int r = 0; r < priors.restarts; ++r) {
    const Eigen::VectorXd start = params.draw_start(rng);
    const optim::LocalResult local = optim::maximize_bfgs(objective, start, box, options);
    if (!std::isfinite(local.value)) {
      ++best.failed_starts;
      continue;
    }
    // Strict comparison keeps the lowest restart index on ties.
    if (!found || local.value > best.objective) {
      best.objective = local.value;
      best.hyperparams = params.decode(local.x);
      found = true;
    }
  }
  if (!found) {
    best.hyperparams = prior_median(priors);
    best.fallback = true;
  }
  return best;
}

MaternFit fit_matern_hyperparameters(const MatrixX<double>& x, const VectorX<double>& y,
                                     const MaternPriors& priors, std::uint64_t seed) {
  const Eigen::Index d = x.cols();
  const auto [ys, scaling] = standardize<double>(y);
  const VectorX<double> targets = ys;

  auto decode = [d](const Eigen::VectorXd& theta) {
    MaternHyperparams<double> hp;
    hp.lengthscales = theta.head(d).array().exp();
    hp.signal_var = std::exp(theta(d));
    hp.noise_var = std::exp(theta(d + 1));
    return hp;
  };

  optim::Box box;
  box.lower.resize(d + 2);
  box.upper.resize(d + 2);
  box.lower.head(d).setConstant(std::log(priors.lengthscale.lo));
  box.upper.head(d).setConstant(std::log(priors.lengthscale.hi));
  box.lower(d) = std::log(priors.variance.lo);
  box.upper(d) = std::log(priors.variance.hi);
  box.lower(d + 1) = std::log(priors.noise.lo);
  box.upper(d + 1) = std::log(priors.noise.hi);

  const optim::Objective objective = [&](const Eigen::VectorXd& theta) {
    const MaternHyperparams<double> hp = decode(theta);
    double lp = 0.0;
    for (Eigen::Index i = 0; i < d; ++i)
      lp += log_normal_prior(theta(i), priors.lengthscale_median, priors.lengthscale_log_std);
    try {
      return matern_log_marginal_likelihood<double>(x, targets, hp) + lp;
    } catch (const Error&) {
      return kNegInf;
    }
  };

  Rng rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  optim::BfgsOptions options;
  options.max_iterations = priors.max_iterations;

  MaternFit best;
  best.objective = kNegInf;
  bool found = false;
  for (int r = 0; r < priors.restarts; ++r) {
    Eigen::VectorXd start(d + 2);
    for (Eigen::Index i = 0; i < d; ++i)
      start(i) = std::log(priors.lengthscale_median) + priors.lengthscale_log_std * normal(rng);
    start(d) = normal(rng);
    start(d + 1) = std::log(1e-5) + unit(rng) * (std::log(1e-2) - std::log(1e-5));
    const optim::LocalResult local = optim::maximize_bfgs(objective, box.project(start), box, options);
    if (!std::isfinite(local.value)) continue;
    if (!found || local.value > best.objective) {
      best.objective = local.value;
      best.hyperparams = decode(local.x);
      found = true;
    }
  }
  if (!found) {
    best.hyperparams.lengthscales = VectorX<double>::Constant(d, priors.lengthscale_median);
    best.hyperparams.signal_var = 1.0;
    best.hyperparams.noise_var = priors.noise.lo;
    best.fallback = true;
  }
  return best;
}

}  // namespace gmfbo
