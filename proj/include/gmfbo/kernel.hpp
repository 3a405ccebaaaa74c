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

// Covariance functions of the multi-source surrogate.
//
// A surrogate input is z = [k, s]: normalized controller gains k in the unit
// square plus a scalar fidelity s in [0, 1]. The composite kernel is
//
//   c(z1, z2) = gamma0(s1, s2) * c0(k1, k2) + gamma1(s1, s2) * c1(k1, k2)
//
// with Matern-5/2 components c_i = sigma_i^2 * M(|k1 - k2|, l_i). The
// cross-source lengthscale of gamma0 shrinks as the twin mismatch grows.

#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <utility>

#include "gmfbo/errors.hpp"

namespace gmfbo {

template <typename Scalar>
using Gains2 = Eigen::Matrix<Scalar, 2, 1>;

/// Surrogate input: normalized gains plus fidelity tag.
template <typename Scalar>
struct AugmentedInput {
  Gains2<Scalar> gains = Gains2<Scalar>::Zero();
  Scalar fidelity = Scalar(1);
};

template <typename Scalar>
struct KernelHyperparams {
  Scalar l0 = Scalar(0.5);
  Scalar l1 = Scalar(0.5);
  Scalar sigma0_sq = Scalar(1);
  Scalar sigma1_sq = Scalar(1);
  Scalar p = Scalar(1);
  Scalar noise_var = Scalar(1e-4);
};

template <typename Scalar>
void validate(const KernelHyperparams<Scalar>& hp, Scalar p_max = Scalar(5)) {
  auto positive = [](Scalar v) { return std::isfinite(v) && v > Scalar(0); };
  if (!positive(hp.l0) || !positive(hp.l1))
    throw InvalidHyperparameter("lengthscales must be finite and positive");
  if (!positive(hp.sigma0_sq) || !positive(hp.sigma1_sq))
    throw InvalidHyperparameter("output variances must be finite and positive");
  if (!std::isfinite(hp.noise_var) || hp.noise_var < Scalar(0))
    throw InvalidHyperparameter("noise variance must be finite and non-negative");
  if (!std::isfinite(hp.p) || hp.p < Scalar(0) || hp.p > p_max)
    throw InvalidHyperparameter("fidelity exponent p must lie in [0, " +
                                std::to_string(double(p_max)) + "]");
}

template <typename Scalar>
struct Interval {
  Scalar lo;
  Scalar hi;

  Scalar clamp(Scalar x) const { return std::min(hi, std::max(lo, x)); }
};

/// Projects s' / e onto the clamp interval. e = 0 is read as s' / 0 = +inf.
template <typename Scalar>
Scalar cross_source_lengthscale(Scalar e_is2, Scalar s_prime,
                                Interval<Scalar> clamp = {Scalar(0.1), Scalar(2)}) {
  if (!(e_is2 > Scalar(0))) return clamp.hi;
  const Scalar ratio = s_prime / e_is2;
  if (!std::isfinite(ratio)) return clamp.hi;
  return clamp.clamp(ratio);
}

/// Mismatch-dependent fidelity bookkeeping shared by the kernel and the
/// acquisition cost. Non-adaptive states keep `l_gamma0` and the twin cost
/// fixed regardless of the mismatch estimate.
template <typename Scalar>
struct FidelityState {
  Scalar e_is2 = Scalar(0.5);
  Scalar s_prime = Scalar(0.1);
  Scalar l_gamma0 = Scalar(0.2);
  Interval<Scalar> clamp_l{Scalar(0.1), Scalar(2)};
  Interval<Scalar> cost_clamp{Scalar(0.1), Scalar(1)};
  Scalar beta = Scalar(4);
  bool adaptive = true;
  Scalar fixed_cost = Scalar(0.5);

  static FidelityState adaptive_state(Scalar e_is2, Scalar s_prime, Scalar beta) {
    FidelityState fs;
    fs.s_prime = s_prime;
    fs.beta = beta;
    return fs.with_mismatch(e_is2);
  }

  static FidelityState fixed_state(Scalar l_gamma0, Scalar cost, Scalar s_prime) {
    FidelityState fs;
    fs.s_prime = s_prime;
    fs.adaptive = false;
    fs.l_gamma0 = l_gamma0;
    fs.fixed_cost = cost;
    return fs;
  }

  FidelityState with_mismatch(Scalar e) const {
    FidelityState next = *this;
    next.e_is2 = std::max(Scalar(0), e);
    if (adaptive) next.l_gamma0 = cross_source_lengthscale(next.e_is2, s_prime, clamp_l);
    return next;
  }
};

/// Matern-5/2 correlation M(r, l).
template <typename Scalar>
Scalar matern52(Scalar r, Scalar l) {
  if (!std::isfinite(l) || !(l > Scalar(0)))
    throw InvalidHyperparameter("Matern lengthscale must be finite and positive");
  const Scalar a = std::sqrt(Scalar(5)) * r / l;
  return (Scalar(1) + a + a * a / Scalar(3)) * std::exp(-a);
}

template <typename Scalar>
Scalar gamma0(Scalar s1, Scalar s2, const FidelityState<Scalar>& fs) {
  return matern52(std::abs(s1 - s2), fs.l_gamma0);
}

template <typename Scalar>
Scalar gamma1(Scalar s1, Scalar s2, Scalar p) {
  return (Scalar(1) - s1) * (Scalar(1) - s2) * std::pow(Scalar(1) + s1 * s2, p);
}

template <typename Scalar>
Scalar composite_kernel(const AugmentedInput<Scalar>& z1, const AugmentedInput<Scalar>& z2,
                        const KernelHyperparams<Scalar>& hp, const FidelityState<Scalar>& fs) {
  const Scalar r = (z1.gains - z2.gains).norm();
  const Scalar g0 = gamma0(z1.fidelity, z2.fidelity, fs);
  const Scalar g1 = gamma1(z1.fidelity, z2.fidelity, hp.p);
  Scalar value = g0 * hp.sigma0_sq * matern52(r, hp.l0);
  // gamma1 vanishes whenever one side is a target-source point.
  if (g1 != Scalar(0)) value += g1 * hp.sigma1_sq * matern52(r, hp.l1);
  return value;
}

template <typename Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> gram_matrix(
    std::span<const AugmentedInput<Scalar>> points, const KernelHyperparams<Scalar>& hp,
    const FidelityState<Scalar>& fs) {
  const auto n = static_cast<Eigen::Index>(points.size());
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> gram(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    gram(i, i) = composite_kernel(points[i], points[i], hp, fs);
    for (Eigen::Index j = 0; j < i; ++j) {
      gram(i, j) = composite_kernel(points[i], points[j], hp, fs);
      gram(j, i) = gram(i, j);
    }
  }
  return gram;
}

template <typename Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, 1> cross_covariance(
    std::span<const AugmentedInput<Scalar>> points, const AugmentedInput<Scalar>& query,
    const KernelHyperparams<Scalar>& hp, const FidelityState<Scalar>& fs) {
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> c(static_cast<Eigen::Index>(points.size()));
  for (Eigen::Index i = 0; i < c.size(); ++i) c(i) = composite_kernel(points[i], query, hp, fs);
  return c;
}

}  // namespace gmfbo
