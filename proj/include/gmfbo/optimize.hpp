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

// Box-constrained local maximizers used by hyperparameter fitting and
// acquisition search.

#pragma once

#include <Eigen/Core>

#include <functional>

namespace gmfbo::optim {

struct Box {
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;

  Eigen::VectorXd project(const Eigen::VectorXd& x) const {
    return x.cwiseMax(lower).cwiseMin(upper);
  }
  Eigen::Index dim() const { return lower.size(); }
};

/// Objective to maximize. Non-finite return values mark infeasible points.
using Objective = std::function<double(const Eigen::VectorXd&)>;

struct BfgsOptions {
  int max_iterations = 60;
  double fd_step = 1e-5;
  double gradient_tolerance = 1e-5;
  double value_tolerance = 1e-9;
};

struct LocalResult {
  Eigen::VectorXd x;
  double value = 0.0;
  int iterations = 0;
  int evaluations = 0;
};

/// Projected BFGS ascent with forward finite-difference gradients.
/// Coordinates pinned at a bound with the gradient pointing outward are held
/// fixed for the step. Requires f(x0) to be finite.
LocalResult maximize_bfgs(const Objective& f, Eigen::VectorXd x0, const Box& box,
                          const BfgsOptions& options = {});

struct PatternOptions {
  double initial_step = 0.1;
  double min_step = 1e-3;
  int max_evaluations = 400;
};

/// Compass search: try +/- step along each coordinate, halve on failure.
LocalResult maximize_pattern(const Objective& f, Eigen::VectorXd x0, const Box& box,
                             const PatternOptions& options = {});

}  // namespace gmfbo::optim
