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

// Random streams and space-filling designs.

#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <random>

namespace gmfbo {

using Rng = std::mt19937_64;

/// Independent random streams of one optimization run. Each stream is seeded
/// from (master seed, stream id, index) so that disabling one component never
/// shifts the draws of another.
enum class Stream : std::uint32_t {
  kInitialDesign = 1,
  kObservationNoise = 2,
  kCandidateDraw = 3,
  kHyperparameters = 4,
  kAcquisition = 5,
  kCorrection = 6,
  kCalibration = 7,
  kExperiment = 8,
};

/// Seed derived through std::seed_seq over the 32-bit halves of the master
/// seed, the stream id and the index.
std::uint64_t derive_seed(std::uint64_t master, Stream stream, std::uint64_t index = 0);

inline Rng make_rng(std::uint64_t master, Stream stream, std::uint64_t index = 0) {
  return Rng(derive_seed(master, stream, index));
}

/// n x dim Latin hypercube in [0, 1]^dim: one point per stratum in every
/// dimension, uniformly jittered inside its stratum.
Eigen::MatrixXd latin_hypercube(int n, int dim, Rng& rng);

}  // namespace gmfbo
