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

// Simulated closed-loop position drive.
//
// The plant is a rigid rotor driven through a static electrical equation:
//
//   J w' = tau(i) - b w - fc sign(w),   i = (sat(u) - ke w) / R,
//   u    = kp e - kd w,                 e = y* - theta,
//
// integrated with explicit Euler at a fixed step. The reference derivative is
// taken as zero, so the derivative action acts on the measured velocity. The
// target source uses tau(i) = kt i. The digital twin perturbs the physical
// constants and replaces the torque map by a seeded noisy lookup table.

#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <limits>
#include <memory>
#include <optional>

#include "gmfbo/design.hpp"

namespace gmfbo {

struct ControllerGains {
  double kp = 0.0;
  double kd = 0.0;

  friend bool operator==(const ControllerGains&, const ControllerGains&) = default;
};

/// Feasible gain box K.
struct GainBox {
  double kp_min = 30.0;
  double kp_max = 200.0;
  double kd_min = 2.0;
  double kd_max = 10.0;

  bool contains(const ControllerGains& g) const {
    return g.kp >= kp_min && g.kp <= kp_max && g.kd >= kd_min && g.kd <= kd_max;
  }
  ControllerGains clamp(const ControllerGains& g) const;
  Eigen::Vector2d range() const { return {kp_max - kp_min, kd_max - kd_min}; }
  Eigen::Vector2d normalize(const ControllerGains& g) const;
  ControllerGains denormalize(const Eigen::Vector2d& unit) const;
};

struct PlantConfig {
  double inertia = 0.01;
  double damping = 1e-3;
  double torque_constant = 0.16;
  double back_emf = 0.16;
  double resistance = 1.0;
  double coulomb_friction = 0.2;
  /// Control saturation |u| <= voltage_limit; infinity disables it.
  double voltage_limit = 48.0;
  /// Dead-zone width on the control signal (backlash hook, 0 = off).
  double dead_zone = 0.0;

  double dt = 1e-3;
  double step_time = 0.1;
  double horizon = 1.0;
  double reference = 1.0;
  /// |y| beyond this flags the response as unstable.
  double safety_cap = 10.0;

  double settling_band = 0.02;
  double transient_band = 0.05;
  double rise_low = 0.1;
  double rise_high = 0.9;
  double overshoot_cap = 1.0;

  /// Number of samples on [0, step_time + horizon).
  int samples() const;
};

/// Throws ConfigError naming the offending field.
void validate(const PlantConfig& cfg);

struct TwinMismatchConfig {
  double inertia_scale = 1.0;
  double damping_scale = 1.0;
  double torque_constant_scale = 1.0;
  double back_emf_scale = 1.0;
  double resistance_scale = 1.0;
  double friction_scale = 0.5;
  /// Relative std of the Gaussian perturbation of each torque-table node.
  double nonlinearity_amplitude = 0.5;
  int table_nodes = 9;
  std::uint64_t seed = 1;
};

struct StepResponse {
  Eigen::VectorXd times;
  Eigen::VectorXd outputs;
  bool unstable = false;
};

/// Step-response metrics; times are measured from the step instant.
struct Metrics {
  double overshoot = 0.0;
  double transient_time = 0.0;
  double rise_time = 0.0;
  double settling_time = 0.0;

  Eigen::Vector4d as_vector() const { return {overshoot, transient_time, rise_time, settling_time}; }
};

struct ObjectiveSpec {
  Eigen::Vector4d weights{0.02, 0.20, 0.70, 0.20};
  Eigen::Vector4d means = Eigen::Vector4d::Zero();
  Eigen::Vector4d stds = Eigen::Vector4d::Ones();
  /// Observation noise std sigma_eta (normalized objective units).
  double noise_std = 0.05;

  static Eigen::Vector4d hardware_weights() { return {0.01, 0.09, 0.82, 0.09}; }
};

StepResponse simulate(const ControllerGains& gains, const PlantConfig& cfg,
                      const TwinMismatchConfig* mismatch = nullptr);

Metrics compute_metrics(const StepResponse& response, const PlantConfig& cfg);

Eigen::Vector4d normalized_metrics(const Metrics& m, const ObjectiveSpec& spec);
double objective_noise_free(const Metrics& m, const ObjectiveSpec& spec);
double objective(const Metrics& m, const ObjectiveSpec& spec, Rng& rng);

PlantConfig set_friction_scale(const PlantConfig& cfg, double factor);

/// Writes `t,y` rows.
void write_response_csv(const std::filesystem::path& path, const StepResponse& response);

/// A closed-loop system that can be queried at given gains.
class InformationSource {
 public:
  virtual ~InformationSource() = default;
  virtual StepResponse respond(const ControllerGains& gains) const = 0;
};

class SimulatedSource final : public InformationSource {
 public:
  explicit SimulatedSource(PlantConfig cfg, std::optional<TwinMismatchConfig> mismatch = std::nullopt)
      : cfg_(cfg), mismatch_(mismatch) {}

  StepResponse respond(const ControllerGains& gains) const override {
    return simulate(gains, cfg_, mismatch_ ? &*mismatch_ : nullptr);
  }
  const PlantConfig& config() const { return cfg_; }

 private:
  PlantConfig cfg_;
  std::optional<TwinMismatchConfig> mismatch_;
};

}  // namespace gmfbo
