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

#include "gmfbo/correction.hpp"

#include <algorithm>
#include <cmath>

#include "gmfbo/errors.hpp"

namespace gmfbo {
namespace {

constexpr double kMinDenominator = 1e-9;

void check_aligned(const StepResponse& a, const StepResponse& b) {
  if (a.times.size() != b.times.size() || a.outputs.size() != a.times.size() ||
      b.outputs.size() != b.times.size())
    throw AlignmentError("twin and target responses have different lengths");
  if (!a.times.isApprox(b.times, 1e-12) && (a.times - b.times).cwiseAbs().maxCoeff() > 1e-12)
    throw AlignmentError("twin and target responses use different time grids");
}

}  // namespace

CorrectionDataset update_correction_dataset(const CorrectionDataset& dc, const ControllerGains& gains,
                                            const StepResponse& twin, const StepResponse& target,
                                            const CorrectionOptions& options) {
  check_aligned(twin, target);
  CorrectionDataset next;
  if (options.accumulate) next.trajectories = dc.trajectories;
  next.trajectories.push_back({gains, twin, target});

  const auto pairs = static_cast<Eigen::Index>(next.trajectories.size());
  const Eigen::Index per_pair = std::max<Eigen::Index>(1, options.budget / pairs);

  std::vector<std::pair<const TrajectoryPair*, Eigen::Index>> rows;
  for (const auto& pair : next.trajectories) {
    const Eigen::Index n = pair.twin.times.size();
    const Eigen::Index stride = (n + per_pair - 1) / per_pair;
    for (Eigen::Index i = 0; i < n; i += stride) rows.emplace_back(&pair, i);
  }

  next.inputs.resize(static_cast<Eigen::Index>(rows.size()), 2);
  next.targets.resize(static_cast<Eigen::Index>(rows.size()));
  next.provenance.reserve(rows.size());
  for (Eigen::Index r = 0; r < next.inputs.rows(); ++r) {
    const auto& [pair, i] = rows[static_cast<std::size_t>(r)];
    next.inputs(r, 0) = pair->twin.times(i);
    next.inputs(r, 1) = pair->twin.outputs(i);
    next.targets(r) = pair->target.outputs(i);
    next.provenance.push_back(pair->gains);
  }
  return next;
}

std::pair<Eigen::VectorXd, Eigen::VectorXd> CorrectionModel::predict(const Eigen::MatrixXd& inputs) const {
  Eigen::MatrixXd scaled(inputs.rows(), 2);
  scaled.col(0) = (inputs.col(0).array() - time_scale_.mean) / time_scale_.std;
  scaled.col(1) = (inputs.col(1).array() - output_scale_.mean) / output_scale_.std;
  auto [residual_mean, variance] = residual_.predict(scaled);
  return {inputs.col(1) + residual_mean, std::move(variance)};
}

CorrectedTrajectory CorrectionModel::correct(const StepResponse& twin, double safety_cap) const {
  Eigen::MatrixXd inputs(twin.times.size(), 2);
  inputs.col(0) = twin.times;
  inputs.col(1) = twin.outputs;
  auto [mean, variance] = predict(inputs);

  CorrectedTrajectory out;
  out.response.times = twin.times;
  out.response.outputs = std::move(mean);
  out.response.unstable = twin.unstable || !out.response.outputs.allFinite() ||
                          out.response.outputs.cwiseAbs().maxCoeff() > safety_cap;
  out.stds = variance.cwiseSqrt();
  return out;
}

CorrectionModel train_correction_model(const CorrectionDataset& dc, std::uint64_t seed,
                                       const MaternPriors& priors) {
  if (dc.size() < 4) throw Error("train_correction_model: need at least 4 rows");
  const auto [t_std, t_scale] = standardize<double>(dc.inputs.col(0));
  const auto [y_std, y_scale] = standardize<double>(dc.inputs.col(1));
  Eigen::MatrixXd x(dc.size(), 2);
  x.col(0) = t_std;
  x.col(1) = y_std;
  const Eigen::VectorXd residual = dc.targets - dc.inputs.col(1);

  const Eigen::Index stride = std::max<Eigen::Index>(1, (x.rows() + priors.fit_rows - 1) / std::max(1, priors.fit_rows));
  const Eigen::Index m = (x.rows() + stride - 1) / stride;
  const Eigen::MatrixXd x_fit = x(Eigen::seqN(0, m, stride), Eigen::all);
  const Eigen::VectorXd r_fit = residual(Eigen::seqN(0, m, stride));
  const MaternFit fit = fit_matern_hyperparameters(x_fit, r_fit, priors, seed);
  return CorrectionModel(MaternRegressor<double>(std::move(x), residual, fit.hyperparams), t_scale, y_scale);
}

Is3Sample corrected_objective(const CorrectionModel& model, const ControllerGains& gains,
                              const InformationSource& twin, const PlantConfig& cfg,
                              const ObjectiveSpec& spec, double fidelity) {
  const StepResponse raw = twin.respond(gains);
  const CorrectedTrajectory corrected = model.correct(raw, cfg.safety_cap);

  Is3Sample sample;
  sample.gains = gains;
  sample.fidelity = fidelity;
  sample.g_corrected = objective_noise_free(compute_metrics(corrected.response, cfg), spec);
  sample.g_twin = objective_noise_free(compute_metrics(raw, cfg), spec);
  sample.bar_sigma_c = std::sqrt(corrected.stds.array().square().mean());
  return sample;
}

bool accept(const Is3Sample& sample, double alpha, double rho) { return sample.bar_sigma_c < rho * alpha; }

ControllerGains draw_candidate_near(const ControllerGains& gains, const GainBox& box, Rng& rng,
                                    double std_fraction) {
  std::normal_distribution<double> normal(0.0, 1.0);
  const Eigen::Vector2d range = box.range();
  const double dkp = normal(rng) * std_fraction * range(0);
  const double dkd = normal(rng) * std_fraction * range(1);
  return box.clamp({gains.kp + dkp, gains.kd + dkd});
}

Is3Batch generate_is3_batch(const CorrectionModel& model, const ControllerGains& center, int n_c,
                            const GateArgs& gate, const InformationSource& twin, const PlantConfig& cfg,
                            const GainBox& box, const ObjectiveSpec& spec, double fidelity,
                            std::uint64_t seed) {
  if (n_c < 1) throw Error("generate_is3_batch: n_c must be at least 1");
  Rng rng(seed);
  Is3Batch batch;
  for (int slot = 0; slot < n_c; ++slot) {
    bool filled = false;
    for (int attempt = 0; attempt < gate.attempts_per_slot && !filled; ++attempt) {
      ++batch.attempts;
      const ControllerGains candidate = draw_candidate_near(center, box, rng, gate.draw_std_fraction);
      Is3Sample sample = corrected_objective(model, candidate, twin, cfg, spec, fidelity);
      if (accept(sample, gate.alpha, gate.rho)) {
        batch.accepted.push_back(sample);
        filled = true;
      }
    }
    if (!filled) batch.shortfall = true;
  }
  return batch;
}

double estimate_mismatch(std::span<const MismatchPair> history, double initial) {
  double sum = 0.0;
  int count = 0;
  for (const auto& pair : history) {
    if (std::abs(pair.g_corrected) < kMinDenominator) continue;
    sum += std::abs(pair.g_corrected - pair.g_twin) / std::abs(pair.g_corrected);
    ++count;
  }
  return count == 0 ? initial : sum / count;
}

}  // namespace gmfbo
