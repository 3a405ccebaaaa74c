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

#include "gmfbo/acquisition.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "gmfbo/design.hpp"
#include "gmfbo/errors.hpp"

namespace gmfbo {

double normal_pdf(double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi); }

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

double expected_improvement(double mean, double std, double best) {
  if (!(std > 0.0)) return std::max(best - mean, 0.0);
  const double u = (best - mean) / std;
  return std::max(0.0, std * (u * normal_cdf(u) + normal_pdf(u)));
}

double sampling_cost(double s, const FidelityState<double>& fs) {
  if (s >= 1.0) return 1.0;
  if (!fs.adaptive) return fs.fixed_cost;
  return fs.cost_clamp.clamp(fs.beta * fs.e_is2);
}

AcquisitionState AcquisitionState::from_dataset(const SurrogateDataset<double>& data,
                                                std::vector<double> fidelities) {
  AcquisitionState state;
  state.fidelities = std::move(fidelities);
  for (std::size_t i = 0; i < data.size(); ++i) {
    auto& slot = data.points[i].fidelity >= 1.0 ? state.best_target : state.best_twin;
    if (!slot || data.targets[i] < slot->value) slot = Incumbent{data.targets[i], data.points[i].gains};
  }
  return state;
}

double ca_ei(const AugmentedInput<double>& z, const PosteriorGP<double>& model, const AcquisitionState& state) {
  const auto& best = state.incumbent(z.fidelity);
  if (!best) throw FidelityNotInitialized("no observation at fidelity " + std::to_string(z.fidelity));
  const Prediction<double> pred = model.predict(z);
  const double ei = expected_improvement(pred.mean, std::sqrt(pred.variance), best->value);
  return ei / sampling_cost(z.fidelity, model.fidelity_state());
}

Candidate select_candidate(const PosteriorGP<double>& model, const AcquisitionState& state, std::uint64_t seed) {
  for (double s : state.fidelities)
    if (!state.incumbent(s)) throw FidelityNotInitialized("no observation at fidelity " + std::to_string(s));

  Rng rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, state.perturbation_std);
  optim::Box box{Eigen::Vector2d::Zero(), Eigen::Vector2d::Ones()};

  Candidate best;
  bool found = false;
  // Target fidelity is searched first so that the strict comparison below
  // resolves ties toward s = 1.
  std::vector<double> order = state.fidelities;
  std::stable_sort(order.begin(), order.end(), [](double a, double b) { return a > b; });
  for (double s : order) {
    const optim::Objective f = [&](const Eigen::VectorXd& x) {
      return ca_ei({Eigen::Vector2d(x(0), x(1)), s}, model, state);
    };
    const Eigen::Vector2d center = state.incumbent(s)->unit_gains;
    const int starts = state.random_starts + state.perturbed_starts;
    for (int r = 0; r < starts; ++r) {
      Eigen::Vector2d x0;
      if (r < state.random_starts) {
        x0 = {unit(rng), unit(rng)};
      } else {
        x0 = center + Eigen::Vector2d(normal(rng), normal(rng));
      }
      const optim::LocalResult local = optim::maximize_pattern(f, box.project(x0), box, state.pattern);
      if (!found || local.value > best.value) {
        best.unit_gains = box.project(local.x);
        best.fidelity = s;
        best.value = local.value;
        found = true;
      }
    }
  }

  if (!(best.value > 0.0)) {
    best.unit_gains = {unit(rng), unit(rng)};
    best.fidelity = 1.0;
    best.value = 0.0;
    best.exploration = true;
  }
  return best;
}

}  // namespace gmfbo
