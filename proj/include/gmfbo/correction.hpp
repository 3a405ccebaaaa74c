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

// Digital-twin correction.
//
// A GP maps (t, twin output) to the target-source output. Its prior mean is
// the twin output itself, so the regressor learns the residual
// y_target - y_twin on standardized inputs and targets. Corrected twin runs
// (IS3) are generated near the latest target-source query and gated on the
// trajectory-averaged predictive uncertainty.

#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "gmfbo/gp.hpp"
#include "gmfbo/plant.hpp"

namespace gmfbo {

struct TrajectoryPair {
  ControllerGains gains;
  StepResponse twin;
  StepResponse target;
};

struct CorrectionOptions {
  /// Maximum number of training rows.
  int budget = 400;
  /// Keep every trajectory pair instead of only the latest one.
  bool accumulate = false;
  MaternPriors priors;
};

struct CorrectionDataset {
  std::vector<TrajectoryPair> trajectories;
  Eigen::MatrixXd inputs;   // rows: (t, twin output)
  Eigen::VectorXd targets;  // target-source output
  std::vector<ControllerGains> provenance;

  Eigen::Index size() const { return inputs.rows(); }
};

CorrectionDataset update_correction_dataset(const CorrectionDataset& dc, const ControllerGains& gains,
                                            const StepResponse& twin, const StepResponse& target,
                                            const CorrectionOptions& options = {});

struct CorrectedTrajectory {
  StepResponse response;
  Eigen::VectorXd stds;
};

class CorrectionModel {
 public:
  CorrectionModel(MaternRegressor<double> residual, Standardization<double> time_scale,
                  Standardization<double> output_scale)
      : residual_(std::move(residual)), time_scale_(time_scale), output_scale_(output_scale) {}

  /// Corrected mean and latent variance at rows (t, twin output).
  std::pair<Eigen::VectorXd, Eigen::VectorXd> predict(const Eigen::MatrixXd& inputs) const;

  CorrectedTrajectory correct(const StepResponse& twin, double safety_cap) const;

  const MaternRegressor<double>& residual() const { return residual_; }

 private:
  MaternRegressor<double> residual_;
  Standardization<double> time_scale_;
  Standardization<double> output_scale_;
};

CorrectionModel train_correction_model(const CorrectionDataset& dc, std::uint64_t seed,
                                       const MaternPriors& priors = {});

struct Is3Sample {
  ControllerGains gains;
  double fidelity = 0.1;
  double g_corrected = 0.0;
  double bar_sigma_c = 0.0;
  /// Noise-free objective of the raw twin run the correction was applied to.
  double g_twin = 0.0;
};

Is3Sample corrected_objective(const CorrectionModel& model, const ControllerGains& gains,
                              const InformationSource& twin, const PlantConfig& cfg,
                              const ObjectiveSpec& spec, double fidelity);

/// Gate: bar_sigma_c < rho * alpha.
bool accept(const Is3Sample& sample, double alpha, double rho);

/// Gaussian draw around `gains` with per-coordinate std `std_fraction` times
/// the box range, projected onto the box.
ControllerGains draw_candidate_near(const ControllerGains& gains, const GainBox& box, Rng& rng,
                                    double std_fraction = 0.05);

struct GateArgs {
  double alpha = 1.0;
  double rho = 0.1;
  int attempts_per_slot = 50;
  double draw_std_fraction = 0.05;
};

struct Is3Batch {
  std::vector<Is3Sample> accepted;
  int attempts = 0;
  bool shortfall = false;
};

/// Draws, corrects and gates candidates until `n_c` are accepted. Each slot
/// gets at most `attempts_per_slot` draws; exhausted slots are skipped and
/// reported through `shortfall`.
Is3Batch generate_is3_batch(const CorrectionModel& model, const ControllerGains& center, int n_c,
                            const GateArgs& gate, const InformationSource& twin, const PlantConfig& cfg,
                            const GainBox& box, const ObjectiveSpec& spec, double fidelity,
                            std::uint64_t seed);

struct MismatchPair {
  double g_corrected;
  double g_twin;
};

/// Mean relative deviation |g_c - g_twin| / |g_c| over pairs with
/// |g_c| >= 1e-9; `initial` when no pair qualifies.
double estimate_mismatch(std::span<const MismatchPair> history, double initial);

}  // namespace gmfbo
