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

#include "gmfbo/optimize.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <limits>

namespace gmfbo::optim {
namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double safe_eval(const Objective& f, const Eigen::VectorXd& x, int& evals) {
  ++evals;
  const double v = f(x);
  return std::isfinite(v) ? v : kNegInf;
}

// Forward differences stepping inward at the upper bound.
Eigen::VectorXd fd_gradient(const Objective& f, const Eigen::VectorXd& x, double fx,
                            const Box& box, double h, int& evals) {
  Eigen::VectorXd g(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    Eigen::VectorXd xp = x;
    double step = h * std::max(1.0, std::abs(x(i)));
    if (x(i) + step > box.upper(i)) step = -step;
    xp(i) += step;
    const double fp = safe_eval(f, xp, evals);
    g(i) = std::isfinite(fp) ? (fp - fx) / step : 0.0;
  }
  return g;
}

// Coordinates sitting on a bound whose ascent direction leaves the box.
Eigen::Array<bool, Eigen::Dynamic, 1> active_set(const Eigen::VectorXd& x,
                                                 const Eigen::VectorXd& g, const Box& box) {
  Eigen::Array<bool, Eigen::Dynamic, 1> active(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    active(i) = (x(i) <= box.lower(i) && g(i) < 0.0) || (x(i) >= box.upper(i) && g(i) > 0.0);
  }
  return active;
}

}  // namespace

LocalResult maximize_bfgs(const Objective& f, Eigen::VectorXd x0, const Box& box,
                          const BfgsOptions& options) {
  LocalResult result;
  Eigen::VectorXd x = box.project(x0);
  double fx = safe_eval(f, x, result.evaluations);
  result.x = x;
  result.value = fx;
  if (!std::isfinite(fx)) return result;

  const Eigen::Index n = x.size();
  Eigen::MatrixXd inv_hessian = Eigen::MatrixXd::Identity(n, n);
  Eigen::VectorXd grad = fd_gradient(f, x, fx, box, options.fd_step, result.evaluations);

  for (int iter = 0; iter < options.max_iterations; ++iter) {
    result.iterations = iter + 1;
    const auto active = active_set(x, grad, box);
    Eigen::VectorXd free_grad = grad;
    for (Eigen::Index i = 0; i < n; ++i)
      if (active(i)) free_grad(i) = 0.0;
    if (free_grad.lpNorm<Eigen::Infinity>() < options.gradient_tolerance) break;

    Eigen::VectorXd dir = inv_hessian * free_grad;
    for (Eigen::Index i = 0; i < n; ++i)
      if (active(i)) dir(i) = 0.0;
    if (dir.dot(free_grad) <= 0.0) {
      inv_hessian.setIdentity();
      dir = free_grad;
    }

    // Backtracking along the projected path with an Armijo condition.
    double t = 1.0;
    Eigen::VectorXd x_new;
    double f_new = kNegInf;
    bool accepted = false;
    for (int ls = 0; ls < 30; ++ls) {
      x_new = box.project(x + t * dir);
      f_new = safe_eval(f, x_new, result.evaluations);
      if (std::isfinite(f_new) && f_new >= fx + 1e-4 * free_grad.dot(x_new - x)) {
        accepted = true;
        break;
      }
      t *= 0.5;
    }
    if (!accepted) {
      if (inv_hessian.isIdentity()) break;
      inv_hessian.setIdentity();
      continue;
    }

    const Eigen::VectorXd grad_new =
        fd_gradient(f, x_new, f_new, box, options.fd_step, result.evaluations);
    const Eigen::VectorXd s = x_new - x;
    // Curvature pair of the minimization problem -f.
    const Eigen::VectorXd y = grad - grad_new;
    const double sy = s.dot(y);
    if (sy > 1e-12 * s.norm() * y.norm()) {
      const double rho = 1.0 / sy;
      const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(n, n);
      inv_hessian = (eye - rho * s * y.transpose()) * inv_hessian *
                        (eye - rho * y * s.transpose()) +
                    rho * s * s.transpose();
    }

    const double improvement = f_new - fx;
    x = x_new;
    fx = f_new;
    grad = grad_new;
    if (improvement < options.value_tolerance * std::max(1.0, std::abs(fx))) break;
  }

  result.x = x;
  result.value = fx;
  return result;
}

LocalResult maximize_pattern(const Objective& f, Eigen::VectorXd x0, const Box& box,
                             const PatternOptions& options) {
  LocalResult result;
  Eigen::VectorXd x = box.project(x0);
  double fx = safe_eval(f, x, result.evaluations);
  double step = options.initial_step;

  while (step >= options.min_step && result.evaluations < options.max_evaluations) {
    ++result.iterations;
    bool moved = false;
    for (Eigen::Index i = 0; i < x.size() && !moved; ++i) {
      for (double sign : {1.0, -1.0}) {
        Eigen::VectorXd trial = x;
        trial(i) += sign * step * (box.upper(i) - box.lower(i));
        trial = box.project(trial);
        if (trial == x) continue;
        const double ft = safe_eval(f, trial, result.evaluations);
        if (ft > fx) {
          x = trial;
          fx = ft;
          moved = true;
          break;
        }
      }
    }
    if (!moved) step *= 0.5;
  }

  result.x = x;
  result.value = fx;
  return result;
}

}  // namespace gmfbo::optim
