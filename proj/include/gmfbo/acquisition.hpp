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

// Expected improvement for minimization, fidelity-aware sampling cost and
// cost-aware candidate search over the normalized gain box.

#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <optional>
#include <vector>

#include "gmfbo/gp.hpp"
#include "gmfbo/optimize.hpp"

namespace gmfbo {

double normal_pdf(double x);
double normal_cdf(double x);

/// E[max(best - X, 0)] for X ~ N(mean, std^2).
double expected_improvement(double mean, double std, double best);

/// 1 at the target fidelity, otherwise beta * e clamped to the cost interval
/// (or the fixed cost for non-adaptive states).
double sampling_cost(double s, const FidelityState<double>& fs);

/// Per-fidelity incumbents and search settings.
struct AcquisitionState {
  struct Incumbent {
    double value;
    Eigen::Vector2d unit_gains;
  };

  /// Fidelities searched, in order. {s', 1} for multi-fidelity runs.
  std::vector<double> fidelities{0.1, 1.0};
  std::optional<Incumbent> best_target;
  std::optional<Incumbent> best_twin;
  int random_starts = 8;
  int perturbed_starts = 8;
  double perturbation_std = 0.1;
  optim::PatternOptions pattern{0.1, 1e-3, 200};

  /// Incumbents taken from the dataset; points with fidelity < 1 share the
  /// twin incumbent.
  static AcquisitionState from_dataset(const SurrogateDataset<double>& data, std::vector<double> fidelities);

  const std::optional<Incumbent>& incumbent(double s) const { return s >= 1.0 ? best_target : best_twin; }
};

/// EI at z divided by the sampling cost of z's fidelity.
double ca_ei(const AugmentedInput<double>& z, const PosteriorGP<double>& model, const AcquisitionState& state);

struct Candidate {
  Eigen::Vector2d unit_gains = Eigen::Vector2d::Zero();
  double fidelity = 1.0;
  double value = 0.0;
  /// Set when every start had zero caEI and a random target point was drawn.
  bool exploration = false;
};

Candidate select_candidate(const PosteriorGP<double>& model, const AcquisitionState& state, std::uint64_t seed);

}  // namespace gmfbo
