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

// Command implementations behind the gmfbo executable. Each command loads the
// configuration, applies the command-line overrides, writes its outputs and
// a manifest.json under the output directory, and returns the exit code.

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>

namespace gmfbo {

struct CommandOptions {
  std::filesystem::path config;
  std::optional<std::string> method;
  std::optional<std::uint64_t> seed;
  int jobs = 1;
  /// Censored runs (threshold never reached) make the command fail.
  bool strict = false;
  /// Output directory (the calibration file path for `calibrate`).
  std::optional<std::filesystem::path> out;
  std::optional<int> resolution;
};

inline constexpr int kExitOk = 0;
inline constexpr int kExitError = 1;
inline constexpr int kExitStrictFailure = 2;

int cmd_calibrate(const CommandOptions& opts, std::ostream& log);
int cmd_run(const CommandOptions& opts, std::ostream& log);
int cmd_bench(const CommandOptions& opts, std::ostream& log);
int cmd_ablation(const CommandOptions& opts, std::ostream& log);
int cmd_nonstationary(const CommandOptions& opts, std::ostream& log);
int cmd_truegrid(const CommandOptions& opts, std::ostream& log);

}  // namespace gmfbo
