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

// Optimization drivers.
//
// run_gmfbo is the guided multi-fidelity loop: on every target-source query
// the twin is re-run at the same gains, the correction model is retrained on
// the trajectory pair, corrected twin samples are added near the query, and
// the mismatch estimate updates the kernel coupling and the twin cost.
// The baselines share the same initialization, noise and seeds.

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "gmfbo/correction.hpp"
#include "gmfbo/gp.hpp"
#include "gmfbo/plant.hpp"

namespace gmfbo {

enum class Method { kGmfbo, kBaselineBo, kMfboCaEi, kMfboModified };

std::string_view to_string(Method method);
/// Accepts gmfbo, bo_ei, mfbo_caei and mfbo_modified.
Method parse_method(std::string_view name);

/// Target-source friction scaled by `friction_factor` for every IS1
/// evaluation after the first `trigger_is1` ones (initialization included).
struct NonStationaryEvent {
  double friction_factor = 2.0;
  int trigger_is1 = 4;
};

struct RunConfig {
  int iterations = 20;
  int n0_is1 = 2;
  int n0_is2 = 4;
  int n_c = 4;
  double s_prime = 0.1;
  double alpha = 1.0;
  double beta = 4.0;
  double rho = 0.1;
  double e_init = 0.5;
  /// Coupling lengthscale and twin cost of the non-adaptive MFBO baseline.
  double fixed_l_gamma0 = 0.5;
  double fixed_cost = 0.5;
  int attempts_per_slot = 50;
  double draw_std_fraction = 0.05;
  bool accumulate_dc = false;
  int correction_budget = 400;
  /// Also run the correction step for the initial IS1 points.
  bool is3_on_init = false;

  PlantConfig plant;
  TwinMismatchConfig twin;
  GainBox box;
  ObjectiveSpec objective;
  HyperPriors priors;
  MaternPriors correction_priors;

  Method method = Method::kGmfbo;
  std::uint64_t seed = 1;
  std::optional<NonStationaryEvent> event;
};

/// Throws ConfigError naming the offending key.
void validate(const RunConfig& cfg);

struct IterationRecord {
  /// 0 for the initial design.
  int iteration = 0;
  Source source = Source::kIS1;
  double fidelity = 1.0;
  ControllerGains gains;
  /// Observed objective (corrected estimate for IS3 rows).
  double g = 0.0;
  /// Noise-free objective of the queried source; for IS1 rows the source in
  /// effect at query time.
  double g_true = 0.0;
  /// NaN except on IS3 rows.
  double bar_sigma_c = 0.0;
  double e_is2 = 0.0;
  double l_gamma0 = 0.0;
  /// Sampling cost H charged by the acquisition for this fidelity.
  double cost = 0.0;
  /// Running sum of fidelities of all evaluated points.
  double cumulative_cost = 0.0;
  /// Best observed IS1 objective so far.
  double best_is1 = 0.0;
  int is1_count = 0;
  bool exploration = false;
  bool shortfall = false;
};

struct RunResult {
  ControllerGains k_star;
  double best_observed = 0.0;
  std::vector<IterationRecord> records;
  int fit_fallbacks = 0;
  int shortfalls = 0;
  /// Number of IS1 evaluations made before the non-stationary event fired
  /// (-1 when no event was applied).
  int event_after_is1 = -1;
};

/// Borrowed information sources. `target_after_event` may be null when no
/// event is configured.
struct Sources {
  const InformationSource* target = nullptr;
  const InformationSource* target_after_event = nullptr;
  const InformationSource* twin = nullptr;
};

struct InitialDesign {
  SurrogateDataset<double> data;
  std::vector<IterationRecord> records;
};

/// N0_is1 Latin-hypercube gains observed on the target source and N0_is2 on
/// the twin, with observation noise drawn from the run's noise stream.
InitialDesign initialize_dataset(const RunConfig& cfg, const Sources& sources);

RunResult run_gmfbo(const RunConfig& cfg, const Sources& sources);
RunResult run_baseline_bo(const RunConfig& cfg, const Sources& sources);
RunResult run_mfbo(const RunConfig& cfg, bool adaptive_kernel, const Sources& sources);

/// Dispatches on cfg.method.
RunResult run(const RunConfig& cfg, const Sources& sources);
/// Builds simulated sources from cfg and dispatches on cfg.method.
RunResult run(const RunConfig& cfg);

/// Sum of fidelities.
double unbiased_cost(std::span<const IterationRecord> records);

}  // namespace gmfbo
