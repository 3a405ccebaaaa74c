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

// Experiment configuration files (JSON with one object per section).
//
// Every section except "plant" may be omitted and every key has a default.
// Unknown keys, wrong types and out-of-range values raise ConfigError naming
// the dotted key. A written manifest is itself a valid configuration and
// carries the fitted objective normalization, so re-running from it skips
// calibration. The free-form "provenance" section is ignored on load.

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "gmfbo/bench.hpp"
#include "gmfbo/gmfbo.hpp"

namespace gmfbo {

struct CalibrationSettings {
  int probe_count = 10;
  std::uint64_t seed = 1;
  /// Calibration file written by `calibrate`; resolved against the config
  /// file's directory.
  std::filesystem::path file;
};

struct AblationSettings {
  std::vector<std::pair<int, int>> cells = default_ablation_grid();
};

struct ExperimentConfig {
  /// Plant, twin, gain box, objective and the gmfbo section. run.seed is the
  /// master seed and run.method the default single-run method.
  RunConfig run;
  std::vector<Method> methods{Method::kGmfbo, Method::kBaselineBo, Method::kMfboCaEi, Method::kMfboModified};
  BenchSettings bench;
  AblationSettings ablation;
  /// Used by the non-stationary scenario only.
  NonStationaryEvent event;
  CalibrationSettings calibration;
  /// True when the objective section carries means and stds.
  bool calibrated = false;
  int truegrid_resolution = 50;
  std::filesystem::path output = "out";
};

ExperimentConfig parse_config(std::string_view text, const std::filesystem::path& base_dir = {});
ExperimentConfig load_config(const std::filesystem::path& path);

/// Pretty-printed JSON with every field. `provenance` (a JSON object text,
/// may be empty) is embedded verbatim under "provenance".
std::string to_json(const ExperimentConfig& cfg, std::string_view provenance = {});

/// Fills the objective normalization from the calibration file or by
/// running calibrate_weights; no-op when already calibrated.
void ensure_calibrated(ExperimentConfig& cfg);

void save_calibration(const std::filesystem::path& path, const CalibrationResult& result);
CalibrationResult load_calibration(const std::filesystem::path& path);

}  // namespace gmfbo
