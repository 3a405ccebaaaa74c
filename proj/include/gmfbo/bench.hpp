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

// Experiment harness: objective calibration, ground-truth grids, seeded
// Monte Carlo repetition with normal-approximation confidence intervals,
// the initial-dataset ablation and the friction-change scenario.
//
// Runs are keyed by (method, seed) and merged in that order, so every
// summary is independent of the worker count.

#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "gmfbo/gmfbo.hpp"

namespace gmfbo {

/// Metric stds below this are floored (metric units: seconds or fraction).
inline constexpr double kCalibrationStdFloor = 1e-2;

struct CalibrationResult {
  Eigen::Vector4d means = Eigen::Vector4d::Zero();
  Eigen::Vector4d stds = Eigen::Vector4d::Ones();
  Eigen::Vector4d weights{0.02, 0.20, 0.70, 0.20};
  int probe_count = 0;
  std::uint64_t seed = 0;

  /// Copy of `spec` with means, stds and weights replaced.
  [[nodiscard]] ObjectiveSpec apply(ObjectiveSpec spec) const;
};

/// Noise-free target responses at `probe_count` Latin-hypercube gains; the
/// metric means and (floored) sample stds define the z-score normalization.
CalibrationResult calibrate_weights(const PlantConfig& plant, const GainBox& box, int probe_count = 10,
                                    std::uint64_t seed = 1,
                                    const Eigen::Vector4d& weights = ObjectiveSpec{}.weights);

/// Noise-free objective over a resolution x resolution grid of the gain box
/// (row-major in kp, then kd), plus the twin's relative error when a twin is
/// given. Relative errors at |g| < 1e-9 are NaN and excluded from the mean.
struct TrueGrid {
  int resolution = 0;
  std::vector<ControllerGains> gains;
  Eigen::VectorXd target;
  Eigen::VectorXd twin;
  Eigen::VectorXd relative_error;
  double optimum = 0.0;
  ControllerGains argmin;
  double mean_relative_error = 0.0;
};

TrueGrid true_grid(const PlantConfig& plant, const TwinMismatchConfig* twin, const GainBox& box,
                   const ObjectiveSpec& spec, int resolution = 50);

struct BenchSettings {
  int n_exper = 20;
  /// Threshold margin delta above the grid-true optimum.
  double margin = 0.1;
  int grid_resolution = 50;
  /// Worker threads; results do not depend on it.
  int jobs = 1;
};

struct MeanCi {
  double mean = 0.0;
  double lo = 0.0;
  double hi = 0.0;

  double width() const { return hi - lo; }
};

/// mean +- 1.96 * sample std / sqrt(n). NaN entries are skipped; an empty
/// input gives NaN.
MeanCi mean_ci(std::span<const double> values);

struct CurvePoint {
  double x = 0.0;
  MeanCi y;
};

/// Target-source evaluations (initialization included) until the first one
/// whose noise-free objective is at or below `threshold`. IS1 evaluations
/// numbered `skip_is1` or lower are ignored and the count restarts after
/// them. Empty when the threshold is never reached.
std::optional<int> is1_to_threshold(std::span<const IterationRecord> records, double threshold,
                                    int skip_is1 = 0);

struct RunOutcome {
  std::uint64_t seed = 0;
  RunResult result;
  /// Censored runs hold the IS1 budget.
  int n_star = 0;
  bool censored = false;
};

struct MethodSummary {
  Method method = Method::kGmfbo;
  std::vector<RunOutcome> runs;
  MeanCi n_star;
  int censored = 0;
  /// Best noise-free IS1 objective against IS1 evaluations 1..budget.
  std::vector<CurvePoint> best_vs_is1;
  /// Best noise-free IS1 objective and unbiased cost after iterations 0..N.
  std::vector<CurvePoint> best_vs_iteration;
  std::vector<CurvePoint> cost_vs_iteration;
  /// Mismatch estimate after iterations 0..N.
  std::vector<CurvePoint> mismatch_vs_iteration;
};

struct BenchmarkSummary {
  std::vector<std::uint64_t> seeds;
  double optimum = 0.0;
  double threshold = 0.0;
  /// n0_is1 + iterations, less the pre-event evaluations in the
  /// non-stationary scenario.
  int is1_budget = 0;
  /// IS1 evaluations ignored when counting n* (event trigger, else 0).
  int skip_is1 = 0;
  std::vector<MethodSummary> methods;

  const MethodSummary& at(Method method) const;
};

/// Seeds of experiments 0..n-1 derived from the master seed.
std::vector<std::uint64_t> experiment_seeds(std::uint64_t master, int n);

/// One run per (method, seed) pair on the paired seed list. The threshold is
/// the grid-true optimum of `base.plant` plus the margin.
BenchmarkSummary monte_carlo(std::span<const Method> methods, const RunConfig& base,
                             const BenchSettings& settings, std::uint64_t master_seed);

/// As above with a precomputed grid optimum.
BenchmarkSummary monte_carlo(std::span<const Method> methods, const RunConfig& base,
                             const BenchSettings& settings, std::uint64_t master_seed, double optimum,
                             int skip_is1 = 0);

struct AblationCell {
  int n0_is1 = 0;
  int n0_is2 = 0;
  BenchmarkSummary summary;
};

/// Rows (N0_is1 in {1, 2, 3, 4, 5, 10}, N0_is2 = 10) followed by
/// (N0_is1 = 2, N0_is2 in {5, 20, 30}).
std::vector<std::pair<int, int>> default_ablation_grid();

std::vector<AblationCell> ablation_grid(std::span<const std::pair<int, int>> grid, std::span<const Method> methods,
                                        const RunConfig& base, const BenchSettings& settings,
                                        std::uint64_t master_seed);

struct MismatchShift {
  /// Runs whose event fired.
  int runs = 0;
  /// Mean mismatch estimate in effect when the event fired, and at run end.
  double before = 0.0;
  double after = 0.0;
};

struct NonStationarySummary {
  BenchmarkSummary summary;
  double optimum_before = 0.0;
  NonStationaryEvent event;
  std::vector<MismatchShift> mismatch;  // parallel to summary.methods
};

/// Monte Carlo with the friction event enabled (defaults when `base.event` is
/// unset). n* counts IS1 evaluations after the event against the grid-true
/// optimum of the changed plant.
NonStationarySummary nonstationary_scenario(const RunConfig& base, std::span<const Method> methods,
                                            const BenchSettings& settings, std::uint64_t master_seed);

/// Export. Doubles are written in shortest round-trip form.
void write_iteration_csv(const std::filesystem::path& path, std::span<const IterationRecord> records);
void write_curve_csv(const std::filesystem::path& path, std::span<const CurvePoint> curve,
                     const char* x_column = "is1_cost", const char* y_column = "mean_best");
void write_summary_csv(const std::filesystem::path& path, const BenchmarkSummary& summary);
void write_ablation_csv(const std::filesystem::path& path, std::span<const AblationCell> cells,
                        std::span<const Method> methods);
void write_truegrid_csvs(const std::filesystem::path& objective_path, const std::filesystem::path& error_path,
                         const TrueGrid& grid);
/// summary.csv, curves/<method>.csv, iterations/<method>_<index>.csv and the
/// per-iteration cost and mismatch curves under `dir`.
void export_benchmark(const std::filesystem::path& dir, const BenchmarkSummary& summary);

/// ">budget" for censored-only cells, otherwise the mean n*.
std::string render_n_star(const MethodSummary& m, int budget);

}  // namespace gmfbo
