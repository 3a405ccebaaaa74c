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


#include <Eigen/Dense>

#include <cmath>
#include <vector>

#include "doctest.h"
#include "gmfbo/correction.hpp"
#include "gmfbo/errors.hpp"

using namespace gmfbo;

namespace {

// Target plant response distorted affinely: y_twin = gain * y + offset.
class AffineTwin final : public InformationSource {
 public:
  AffineTwin(PlantConfig cfg, double gain, double offset) : cfg_(cfg), gain_(gain), offset_(offset) {}

  StepResponse respond(const ControllerGains& gains) const override {
    ++calls;
    StepResponse r = simulate(gains, cfg_);
    r.outputs = (gain_ * r.outputs.array() + offset_).matrix();
    return r;
  }

  mutable int calls = 0;

 private:
  PlantConfig cfg_;
  double gain_, offset_;
};

double g_of(const StepResponse& r, const PlantConfig& cfg, const ObjectiveSpec& spec) {
  return objective_noise_free(compute_metrics(r, cfg), spec);
}

}  // namespace

TEST_CASE("dataset update subsamples and replaces") {
  const PlantConfig cfg;
  const StepResponse a = simulate({100.0, 4.0}, cfg);
  REQUIRE(a.times.size() == 1100);
  const CorrectionDataset one = update_correction_dataset({}, {100.0, 4.0}, a, a);
  CHECK(one.size() == 367);
  CHECK(one.targets == one.inputs.col(1));
  CHECK(one.provenance.size() == 367);

  const StepResponse b = simulate({150.0, 6.0}, cfg);
  const CorrectionDataset two = update_correction_dataset(one, {150.0, 6.0}, b, b);
  REQUIRE(two.trajectories.size() == 1);
  CHECK(two.trajectories[0].gains == ControllerGains{150.0, 6.0});
  CHECK(two.size() == 367);

  CorrectionOptions acc;
  acc.accumulate = true;
  const CorrectionDataset both = update_correction_dataset(one, {150.0, 6.0}, b, b, acc);
  CHECK(both.trajectories.size() == 2);
  CHECK(both.size() <= acc.budget);

  PlantConfig shorter = cfg;
  shorter.horizon = 0.5;
  CHECK_THROWS_AS(update_correction_dataset({}, {100.0, 4.0}, a, simulate({100.0, 4.0}, shorter)), AlignmentError);
}

TEST_CASE("correction model on a perfect twin is the identity") {
  const PlantConfig cfg;
  const StepResponse r = simulate({120.0, 5.0}, cfg);
  const CorrectionModel model = train_correction_model(update_correction_dataset({}, {120.0, 5.0}, r, r), 1);
  // Held-out points: a neighbouring trajectory.
  const StepResponse held = simulate({125.0, 5.2}, cfg);
  Eigen::MatrixXd x(held.times.size(), 2);
  x.col(0) = held.times;
  x.col(1) = held.outputs;
  const auto [mean, var] = model.predict(x);
  CHECK((mean - held.outputs).cwiseAbs().mean() < 1e-3);
  CHECK((var.array() >= 0.0).all());

  const CorrectionModel again = train_correction_model(update_correction_dataset({}, {120.0, 5.0}, r, r), 1);
  CHECK(again.residual().hyperparams().lengthscales == model.residual().hyperparams().lengthscales);
  CHECK(again.residual().hyperparams().noise_var == model.residual().hyperparams().noise_var);

  const SimulatedSource twin(cfg);
  const ObjectiveSpec spec;
  const Is3Sample s = corrected_objective(model, {120.0, 5.0}, twin, cfg, spec, 0.1);
  CHECK(std::abs(s.g_corrected - s.g_twin) < 1e-3);
}

TEST_CASE("constant bias is removed") {
  const PlantConfig cfg;
  const AffineTwin twin(cfg, 1.0, -0.1);
  const ControllerGains k{120.0, 5.0};
  const StepResponse real = simulate(k, cfg);
  const CorrectionModel model = train_correction_model(update_correction_dataset({}, k, twin.respond(k), real), 2);
  const StepResponse probe_twin = twin.respond({130.0, 5.5});
  const StepResponse probe_real = simulate({130.0, 5.5}, cfg);
  const CorrectedTrajectory c = model.correct(probe_twin, cfg.safety_cap);
  CHECK((c.response.outputs - probe_real.outputs).cwiseAbs().maxCoeff() < 1e-2);
  CHECK(std::abs(compute_metrics(c.response, cfg).overshoot - compute_metrics(probe_real, cfg).overshoot) < 1e-2);
}

TEST_CASE("affine distortions are corrected from one trajectory") {
  const PlantConfig cfg;
  const GainBox box;
  const ObjectiveSpec spec;  // raw metric units keep the objective positive
  const ControllerGains k{120.0, 5.0};
  for (const double a : {0.8, 1.2}) {
    for (const double b : {-0.1, 0.1}) {
      CAPTURE(a);
      CAPTURE(b);
      const AffineTwin twin(cfg, a, b);
      const CorrectionModel model =
          train_correction_model(update_correction_dataset({}, k, twin.respond(k), simulate(k, cfg)), 3);
      Rng rng(11);
      std::vector<MismatchPair> history;
      double direct = 0.0;
      for (int i = 0; i < 20; ++i) {
        const ControllerGains probe = draw_candidate_near(k, box, rng);
        const Is3Sample s = corrected_objective(model, probe, twin, cfg, spec, 0.1);
        const double g_real = g_of(simulate(probe, cfg), cfg, spec);
        CHECK(std::abs(s.g_corrected - g_real) <= 0.05 * std::abs(g_real));
        history.push_back({s.g_corrected, s.g_twin});
        direct += std::abs(g_real - s.g_twin) / std::abs(g_real);
      }
      CHECK(std::abs(estimate_mismatch(history, 0.5) - direct / 20.0) <= 0.05);
    }
  }
}

TEST_CASE("gate") {
  Is3Sample s;
  s.bar_sigma_c = 0.0;
  CHECK(accept(s, 1.0, 0.1));
  s.bar_sigma_c = 0.5;
  CHECK_FALSE(accept(s, 1.0, 0.1));
  s.bar_sigma_c = 0.099;
  CHECK(accept(s, 1.0, 0.1));
  s.bar_sigma_c = 0.1;
  CHECK_FALSE(accept(s, 1.0, 0.1));
}

TEST_CASE("candidate draws") {
  const GainBox box;
  Rng rng(4);
  const ControllerGains center{115.0, 6.0};
  CHECK(draw_candidate_near(center, box, rng, 0.0) == center);

  const ControllerGains corner{box.kp_max, box.kd_min};
  for (int i = 0; i < 200; ++i) {
    const ControllerGains g = draw_candidate_near(corner, box, rng);
    CHECK(box.contains(g));
  }

  const int n = 10000;
  Eigen::ArrayXd kp(n), kd(n);
  for (int i = 0; i < n; ++i) {
    const ControllerGains g = draw_candidate_near(center, box, rng);
    kp(i) = g.kp;
    kd(i) = g.kd;
  }
  auto sample_std = [](const Eigen::ArrayXd& v) {
    return std::sqrt((v - v.mean()).square().sum() / static_cast<double>(v.size() - 1));
  };
  CHECK(sample_std(kp) == doctest::Approx(0.05 * (box.kp_max - box.kp_min)).epsilon(0.05));
  CHECK(sample_std(kd) == doctest::Approx(0.05 * (box.kd_max - box.kd_min)).epsilon(0.05));
}

TEST_CASE("IS3 batches") {
  const PlantConfig cfg;
  const GainBox box;
  const ObjectiveSpec spec;
  const AffineTwin twin(cfg, 1.0, 0.0);
  const ControllerGains k{120.0, 5.0};
  const StepResponse r = simulate(k, cfg);
  const CorrectionModel model = train_correction_model(update_correction_dataset({}, k, r, r), 5);

  GateArgs open;
  open.rho = 1e9;
  twin.calls = 0;
  const Is3Batch all = generate_is3_batch(model, k, 4, open, twin, cfg, box, spec, 0.1, 9);
  CHECK(all.accepted.size() == 4);
  CHECK_FALSE(all.shortfall);
  // Only twin runs are made, one per attempt.
  CHECK(twin.calls == all.attempts);

  GateArgs closed;
  closed.rho = 0.0;
  const Is3Batch none = generate_is3_batch(model, k, 4, closed, twin, cfg, box, spec, 0.1, 9);
  CHECK(none.accepted.empty());
  CHECK(none.shortfall);
  CHECK(none.attempts == 200);

  const Is3Batch repeat = generate_is3_batch(model, k, 4, open, twin, cfg, box, spec, 0.1, 9);
  REQUIRE(repeat.accepted.size() == all.accepted.size());
  for (std::size_t i = 0; i < all.accepted.size(); ++i) {
    CHECK(repeat.accepted[i].gains == all.accepted[i].gains);
    CHECK(repeat.accepted[i].g_corrected == all.accepted[i].g_corrected);
  }
}

TEST_CASE("property: lowering rho never increases acceptances") {
  const PlantConfig cfg;
  const GainBox box;
  const ObjectiveSpec spec;
  TwinMismatchConfig mismatch;
  const SimulatedSource twin(cfg, mismatch);
  const ControllerGains k{150.0, 4.0};
  const CorrectionModel model =
      train_correction_model(update_correction_dataset({}, k, twin.respond(k), simulate(k, cfg)), 6);
  std::vector<double> sigmas;
  Rng rng(12);
  for (int i = 0; i < 30; ++i)
    sigmas.push_back(corrected_objective(model, draw_candidate_near(k, box, rng), twin, cfg, spec, 0.1).bar_sigma_c);
  int previous = static_cast<int>(sigmas.size()) + 1;
  for (const double rho : {1.0, 0.3, 0.1, 0.03, 0.01, 0.001}) {
    int accepted = 0;
    for (const double s : sigmas) accepted += accept(Is3Sample{.bar_sigma_c = s}, 1.0, rho);
    CHECK(accepted <= previous);
    previous = accepted;
  }
}

TEST_CASE("mismatch estimate") {
  const std::vector<MismatchPair> equal{{1.0, 1.0}, {3.0, 3.0}};
  CHECK(estimate_mismatch(equal, 0.5) == 0.0);
  const std::vector<MismatchPair> single{{2.0, 1.0}};
  CHECK(estimate_mismatch(single, 0.5) == doctest::Approx(0.5));
  const std::vector<MismatchPair> two{{2.0, 1.0}, {4.0, 5.0}};
  CHECK(estimate_mismatch(two, 0.5) == doctest::Approx(0.375));
  const std::vector<MismatchPair> degenerate{{0.0, 1.0}};
  CHECK(estimate_mismatch(degenerate, 0.5) == 0.5);
  CHECK(estimate_mismatch({}, 0.25) == 0.25);
  const std::vector<MismatchPair> mixed{{0.0, 1.0}, {2.0, 1.0}};
  CHECK(estimate_mismatch(mixed, 0.5) == doctest::Approx(0.5));
}
