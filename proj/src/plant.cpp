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

#include "gmfbo/plant.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <vector>

#include <fmt/format.h>

#include "gmfbo/errors.hpp"

namespace gmfbo {

ControllerGains GainBox::clamp(const ControllerGains& g) const {
  return {std::clamp(g.kp, kp_min, kp_max), std::clamp(g.kd, kd_min, kd_max)};
}

Eigen::Vector2d GainBox::normalize(const ControllerGains& g) const {
  return {(g.kp - kp_min) / (kp_max - kp_min), (g.kd - kd_min) / (kd_max - kd_min)};
}

ControllerGains GainBox::denormalize(const Eigen::Vector2d& unit) const {
  return {kp_min + unit(0) * (kp_max - kp_min), kd_min + unit(1) * (kd_max - kd_min)};
}

int PlantConfig::samples() const {
  return static_cast<int>(std::lround((step_time + horizon) / dt));
}

namespace {

bool divides(double dt, double span) {
  const double ratio = span / dt;
  return std::abs(ratio - std::round(ratio)) < 1e-6;
}

int step_index(const PlantConfig& cfg) { return static_cast<int>(std::lround(cfg.step_time / cfg.dt)); }

// Piecewise-linear torque map over current, linearly extrapolated.
class TorqueTable {
 public:
  TorqueTable(std::vector<double> currents, std::vector<double> torques)
      : currents_(std::move(currents)), torques_(std::move(torques)) {}

  double operator()(double current) const {
    const auto n = currents_.size();
    std::size_t seg;
    if (current <= currents_.front()) {
      seg = 0;
    } else if (current >= currents_.back()) {
      seg = n - 2;
    } else {
      seg = static_cast<std::size_t>(std::upper_bound(currents_.begin(), currents_.end(), current) -
                                     currents_.begin()) - 1;
    }
    const double x0 = currents_[seg], x1 = currents_[seg + 1];
    const double w = (current - x0) / (x1 - x0);
    return torques_[seg] + w * (torques_[seg + 1] - torques_[seg]);
  }

 private:
  std::vector<double> currents_;
  std::vector<double> torques_;
};

struct TwinModel {
  PlantConfig cfg;
  std::optional<TorqueTable> table;
};

TwinModel make_twin(const PlantConfig& nominal, const TwinMismatchConfig& m) {
  TwinModel twin{nominal, std::nullopt};
  twin.cfg.inertia *= m.inertia_scale;
  twin.cfg.damping *= m.damping_scale;
  twin.cfg.torque_constant *= m.torque_constant_scale;
  twin.cfg.back_emf *= m.back_emf_scale;
  twin.cfg.resistance *= m.resistance_scale;
  twin.cfg.coulomb_friction *= m.friction_scale;
  if (m.nonlinearity_amplitude <= 0.0) return twin;

  const int nodes = std::max(3, m.table_nodes);
  const double i_max = std::isfinite(nominal.voltage_limit) ? nominal.voltage_limit / nominal.resistance : 1e3;
  Rng rng(m.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> currents(static_cast<std::size_t>(nodes));
  std::vector<double> torques(static_cast<std::size_t>(nodes));
  for (int j = 0; j < nodes; ++j) {
    const double current = -i_max + 2.0 * i_max * j / (nodes - 1);
    // Node gains stay positive so the perturbed map never reverses torque.
    const double factor = std::max(0.1, 1.0 + m.nonlinearity_amplitude * normal(rng));
    currents[static_cast<std::size_t>(j)] = current;
    torques[static_cast<std::size_t>(j)] = twin.cfg.torque_constant * current * factor;
  }
  twin.table.emplace(std::move(currents), std::move(torques));
  return twin;
}

double sign(double x) { return (x > 0.0) - (x < 0.0); }

template <typename TorqueMap>
StepResponse integrate(const ControllerGains& gains, const PlantConfig& cfg, const TorqueMap& torque) {
  const int n = cfg.samples();
  const int k0 = step_index(cfg);
  StepResponse resp;
  resp.times = Eigen::VectorXd::LinSpaced(n, 0.0, (n - 1) * cfg.dt);
  resp.outputs.resize(n);

  double theta = 0.0, omega = 0.0;
  for (int k = 0; k < n; ++k) {
    resp.outputs(k) = theta;
    const double ref = k >= k0 ? cfg.reference : 0.0;
    double u = gains.kp * (ref - theta) - gains.kd * omega;
    if (cfg.dead_zone > 0.0) u = std::abs(u) <= cfg.dead_zone ? 0.0 : u - cfg.dead_zone * sign(u);
    if (std::isfinite(cfg.voltage_limit)) u = std::clamp(u, -cfg.voltage_limit, cfg.voltage_limit);
    const double current = (u - cfg.back_emf * omega) / cfg.resistance;
    const double drive = torque(current) - cfg.damping * omega;
    const double fc = cfg.coulomb_friction;

    double omega_next;
    if (omega == 0.0) {
      // Static friction holds the rotor until the drive exceeds it.
      omega_next = std::abs(drive) <= fc ? 0.0 : cfg.dt * (drive - fc * sign(drive)) / cfg.inertia;
    } else {
      omega_next = omega + cfg.dt * (drive - fc * sign(omega)) / cfg.inertia;
      if (sign(omega_next) != sign(omega) && std::abs(drive) <= fc) omega_next = 0.0;
    }
    theta += cfg.dt * omega;
    omega = omega_next;

    if (!std::isfinite(theta) || std::abs(theta) > cfg.safety_cap) {
      resp.unstable = true;
      const double held = std::isfinite(theta) ? std::clamp(theta, -cfg.safety_cap, cfg.safety_cap)
                                               : cfg.safety_cap;
      for (int j = k + 1; j < n; ++j) resp.outputs(j) = held;
      break;
    }
  }
  return resp;
}

// First time (relative to t0) the normalized response reaches `level`,
// linearly interpolated between samples; horizon when never reached.
double first_crossing(const Eigen::VectorXd& y, double level, double dt, double horizon) {
  for (Eigen::Index j = 0; j < y.size(); ++j) {
    if (y(j) >= level) {
      if (j == 0) return 0.0;
      const double frac = (level - y(j - 1)) / (y(j) - y(j - 1));
      return std::min(horizon, (static_cast<double>(j - 1) + frac) * dt);
    }
  }
  return horizon;
}

// Time (relative to t0) after which |y - 1| stays within `band`.
double entry_time(const Eigen::VectorXd& y, double band, double dt, double horizon) {
  Eigen::Index last_out = -1;
  for (Eigen::Index j = y.size() - 1; j >= 0; --j) {
    if (std::abs(y(j) - 1.0) > band) {
      last_out = j;
      break;
    }
  }
  if (last_out < 0) return 0.0;
  if (last_out == y.size() - 1) return horizon;
  return std::min(horizon, static_cast<double>(last_out + 1) * dt);
}

}  // namespace

void validate(const PlantConfig& cfg) {
  auto positive = [](const char* key, double v) {
    if (!std::isfinite(v) || v <= 0.0) throw ConfigError(std::string("plant.") + key, "must be positive");
  };
  positive("inertia", cfg.inertia);
  positive("resistance", cfg.resistance);
  positive("torque_constant", cfg.torque_constant);
  positive("dt", cfg.dt);
  positive("step_time", cfg.step_time);
  positive("horizon", cfg.horizon);
  positive("safety_cap", cfg.safety_cap);
  if (!(cfg.damping >= 0.0)) throw ConfigError("plant.damping", "must be non-negative");
  if (!(cfg.back_emf >= 0.0)) throw ConfigError("plant.back_emf", "must be non-negative");
  if (!(cfg.coulomb_friction >= 0.0)) throw ConfigError("plant.coulomb_friction", "must be non-negative");
  if (!(cfg.voltage_limit > 0.0)) throw ConfigError("plant.voltage_limit", "must be positive");
  if (!(cfg.dead_zone >= 0.0)) throw ConfigError("plant.dead_zone", "must be non-negative");
  if (!divides(cfg.dt, cfg.step_time)) throw ConfigError("plant.step_time", "must be a multiple of dt");
  if (!divides(cfg.dt, cfg.horizon)) throw ConfigError("plant.horizon", "must be a multiple of dt");
}

StepResponse simulate(const ControllerGains& gains, const PlantConfig& cfg,
                      const TwinMismatchConfig* mismatch) {
  if (mismatch == nullptr) {
    return integrate(gains, cfg, [&](double i) { return cfg.torque_constant * i; });
  }
  const TwinModel twin = make_twin(cfg, *mismatch);
  if (twin.table) return integrate(gains, twin.cfg, *twin.table);
  return integrate(gains, twin.cfg, [&](double i) { return twin.cfg.torque_constant * i; });
}

Metrics compute_metrics(const StepResponse& response, const PlantConfig& cfg) {
  const double horizon = cfg.horizon;
  if (response.unstable) return {cfg.overshoot_cap, horizon, horizon, horizon};
  if (cfg.reference == 0.0) return {};

  const int k0 = step_index(cfg);
  const Eigen::Index len = std::max<Eigen::Index>(0, response.outputs.size() - k0);
  if (len == 0) throw Error("compute_metrics: response does not cover the step window");
  const Eigen::VectorXd y = response.outputs.tail(len) / cfg.reference;

  Metrics m;
  m.overshoot = std::clamp(y.maxCoeff() - 1.0, 0.0, cfg.overshoot_cap);
  const double t_lo = first_crossing(y, cfg.rise_low, cfg.dt, horizon);
  const double t_hi = first_crossing(y, cfg.rise_high, cfg.dt, horizon);
  m.rise_time = t_hi >= horizon ? horizon : t_hi - t_lo;
  m.transient_time = entry_time(y, cfg.transient_band, cfg.dt, horizon);
  m.settling_time = entry_time(y, cfg.settling_band, cfg.dt, horizon);
  return m;
}

Eigen::Vector4d normalized_metrics(const Metrics& m, const ObjectiveSpec& spec) {
  return ((m.as_vector() - spec.means).array() / spec.stds.array()).matrix();
}

double objective_noise_free(const Metrics& m, const ObjectiveSpec& spec) {
  return spec.weights.dot(normalized_metrics(m, spec));
}

double objective(const Metrics& m, const ObjectiveSpec& spec, Rng& rng) {
  const double clean = objective_noise_free(m, spec);
  if (spec.noise_std <= 0.0) return clean;
  std::normal_distribution<double> noise(0.0, spec.noise_std);
  return clean + noise(rng);
}

PlantConfig set_friction_scale(const PlantConfig& cfg, double factor) {
  if (!(factor > 0.0)) throw ConfigError("friction_factor", "must be positive");
  PlantConfig out = cfg;
  out.coulomb_friction *= factor;
  return out;
}

void write_response_csv(const std::filesystem::path& path, const StepResponse& response) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << "t,y\n";
  for (Eigen::Index i = 0; i < response.times.size(); ++i)
    out << fmt::format("{:.17g},{:.17g}\n", response.times(i), response.outputs(i));
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace gmfbo
