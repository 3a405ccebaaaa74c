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


#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "doctest.h"
#include "gmfbo/acquisition.hpp"
#include "gmfbo/bench.hpp"
#include "gmfbo/errors.hpp"
#include "gmfbo/gmfbo.hpp"

using namespace gmfbo;

namespace {

RunConfig calibrated(Method method = Method::kGmfbo) {
  RunConfig cfg;
  cfg.objective = calibrate_weights(cfg.plant, cfg.box).apply(cfg.objective);
  cfg.method = method;
  return cfg;
}

TwinMismatchConfig perfect_twin() {
  TwinMismatchConfig t;
  t.friction_scale = 1.0;
  t.nonlinearity_amplitude = 0.0;
  return t;
}

std::uint64_t paired_seed(int i) { return derive_seed(1, Stream::kExperiment, static_cast<std::uint64_t>(i)); }

int count(const std::vector<IterationRecord>& records, auto&& pred) {
  int n = 0;
  for (const auto& r : records) n += pred(r) ? 1 : 0;
  return n;
}

bool same_records(const std::vector<IterationRecord>& a, const std::vector<IterationRecord>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const auto& x = a[i];
    const auto& y = b[i];
    if (x.iteration != y.iteration || x.source != y.source || x.fidelity != y.fidelity || !(x.gains == y.gains) ||
        x.g != y.g || x.g_true != y.g_true || x.e_is2 != y.e_is2 || x.cumulative_cost != y.cumulative_cost)
      return false;
  }
  return true;
}

}  // namespace

TEST_CASE("method names") {
  for (const Method m : {Method::kGmfbo, Method::kBaselineBo, Method::kMfboCaEi, Method::kMfboModified})
    CHECK(parse_method(to_string(m)) == m);
  CHECK(to_string(Method::kBaselineBo) == "bo_ei");
  CHECK_THROWS_AS(parse_method("ucb"), ConfigError);
}

TEST_CASE("configuration validation") {
  RunConfig cfg;
  cfg.n_c = 0;
  CHECK_THROWS_AS(run(cfg), ConfigError);
  cfg = RunConfig{};
  cfg.iterations = 0;
  CHECK_THROWS_AS(run(cfg), ConfigError);
  cfg = RunConfig{};
  cfg.n0_is2 = 0;
  CHECK_THROWS_AS(run(cfg), ConfigError);
}

TEST_CASE("initial design") {
  RunConfig cfg = calibrated();
  const SimulatedSource target(cfg.plant), twin(cfg.plant, cfg.twin);
  const Sources src{&target, nullptr, &twin};
  const InitialDesign d = initialize_dataset(cfg, src);
  CHECK(d.data.size() == 6);
  CHECK(count(d.records, [](const auto& r) { return r.fidelity == 1.0; }) == 2);
  CHECK(d.records.back().cumulative_cost == doctest::Approx(2.4));

  const InitialDesign again = initialize_dataset(cfg, src);
  CHECK(same_records(d.records, again.records));

  cfg.n0_is1 = 1;
  cfg.n0_is2 = 1;
  const InitialDesign small = initialize_dataset(cfg, src);
  REQUIRE(small.data.size() == 2);
  CHECK(small.data.points[0].fidelity == 1.0);
  CHECK(small.data.points[1].fidelity == cfg.s_prime);
}

TEST_CASE("unbiased cost") {
  std::vector<IterationRecord> r(4);
  const double s[] = {1.0, 0.1, 0.1, 1.0};
  for (int i = 0; i < 4; ++i) r[static_cast<std::size_t>(i)].fidelity = s[i];
  CHECK(unbiased_cost(r) == doctest::Approx(2.2));
  CHECK(unbiased_cost({}) == 0.0);
}

TEST_CASE("GMFBO run bookkeeping") {
  RunConfig cfg = calibrated();
  cfg.seed = paired_seed(3);
  const RunResult r = run(cfg);
  const int n0 = cfg.n0_is1 + cfg.n0_is2;

  SUBCASE("initialization is not corrected") {
    CHECK(r.records[static_cast<std::size_t>(n0 - 1)].cumulative_cost == doctest::Approx(2.4));
    CHECK(count(r.records, [](const auto& x) { return x.iteration == 0 && x.source == Source::kIS3; }) == 0);
  }

  SUBCASE("dataset size and IS3 slots") {
    const int is3 = count(r.records, [](const auto& x) { return x.source == Source::kIS3; });
    CHECK(static_cast<int>(r.records.size()) == n0 + cfg.iterations + is3);
    for (int it = 1; it <= cfg.iterations; ++it) {
      const int decisions = count(r.records, [&](const auto& x) { return x.iteration == it && x.source != Source::kIS3; });
      CHECK(decisions == 1);
      const int corrected = count(r.records, [&](const auto& x) { return x.iteration == it && x.source == Source::kIS3; });
      const bool target = count(r.records, [&](const auto& x) { return x.iteration == it && x.source == Source::kIS1; }) == 1;
      const bool shortfall = count(r.records, [&](const auto& x) { return x.iteration == it && x.shortfall; }) == 1;
      if (!target) CHECK(corrected == 0);
      if (target && !shortfall) CHECK(corrected == cfg.n_c);
      if (target && shortfall) CHECK(corrected < cfg.n_c);
    }
  }

  SUBCASE("costs and traces") {
    double sum = 0.0;
    double best = std::numeric_limits<double>::infinity();
    for (const auto& x : r.records) {
      sum += x.fidelity;
      CHECK(x.cumulative_cost == doctest::Approx(sum).epsilon(1e-12));
      if (x.is1_count > 0) {
        CHECK(x.best_is1 <= best);
        best = x.best_is1;
      }
      if (x.source == Source::kIS3) {
        CHECK(x.bar_sigma_c < cfg.rho * cfg.alpha);
        CHECK(x.fidelity == cfg.s_prime);
      }
      CHECK(x.e_is2 >= 0.0);
      CHECK(x.cost >= 0.1);
      CHECK(x.cost <= 1.0);
    }
    CHECK(r.best_observed == best);
  }

  SUBCASE("mismatch state changes only on target queries") {
    for (std::size_t i = 1; i < r.records.size(); ++i) {
      const auto& prev = r.records[i - 1];
      const auto& cur = r.records[i];
      if (cur.e_is2 != prev.e_is2 || cur.l_gamma0 != prev.l_gamma0) {
        const int it = cur.iteration;
        CHECK(count(r.records, [&](const auto& x) { return x.iteration == it && x.source == Source::kIS1; }) == 1);
      }
    }
  }

  SUBCASE("k* is the best target observation") {
    double best = std::numeric_limits<double>::infinity();
    ControllerGains at;
    for (const auto& x : r.records)
      if (x.source == Source::kIS1 && x.g < best) {
        best = x.g;
        at = x.gains;
      }
    CHECK(r.k_star == at);
  }

  SUBCASE("determinism") {
    const RunResult again = run(cfg);
    CHECK(same_records(r.records, again.records));
    CHECK(again.k_star == r.k_star);
  }
}

TEST_CASE("single iteration audit") {
  RunConfig cfg = calibrated();
  cfg.iterations = 1;
  cfg.seed = 9;
  const RunResult r = run(cfg);
  const int decisions = count(r.records, [](const auto& x) { return x.iteration == 1 && x.source != Source::kIS3; });
  REQUIRE(decisions == 1);
  const auto& d = *std::find_if(r.records.begin(), r.records.end(),
                                [](const auto& x) { return x.iteration == 1 && x.source != Source::kIS3; });
  const auto& before = r.records[static_cast<std::size_t>(cfg.n0_is1 + cfg.n0_is2 - 1)];
  if (d.fidelity == 1.0) {
    CHECK(d.cost == 1.0);
  } else {
    CHECK(d.cost == sampling_cost(d.fidelity, FidelityState<double>::adaptive_state(before.e_is2, cfg.s_prime, cfg.beta)));
  }
  CHECK(d.cumulative_cost == doctest::Approx(before.cumulative_cost + d.fidelity));
}

TEST_CASE("baseline BO uses the target source only") {
  RunConfig cfg = calibrated(Method::kBaselineBo);
  cfg.seed = paired_seed(2);
  const RunResult r = run(cfg);
  CHECK(static_cast<int>(r.records.size()) == cfg.n0_is1 + cfg.iterations);
  for (const auto& x : r.records) CHECK(x.fidelity == 1.0);
  CHECK(unbiased_cost(r.records) == doctest::Approx(cfg.n0_is1 + cfg.iterations));
}

TEST_CASE("MFBO baselines never add corrected samples") {
  for (const Method m : {Method::kMfboCaEi, Method::kMfboModified}) {
    RunConfig cfg = calibrated(m);
    cfg.seed = paired_seed(4);
    const RunResult r = run(cfg);
    CHECK(count(r.records, [](const auto& x) { return x.source == Source::kIS3; }) == 0);
    if (m == Method::kMfboCaEi) {
      for (const auto& x : r.records) {
        CHECK(x.l_gamma0 == cfg.fixed_l_gamma0);
        if (x.fidelity < 1.0) CHECK(x.cost == cfg.fixed_cost);
      }
    }
  }
}

TEST_CASE("modified MFBO estimates a perfect twin as accurate") {
  RunConfig cfg = calibrated(Method::kMfboModified);
  cfg.twin = perfect_twin();
  cfg.objective.noise_std = 0.0;
  cfg.seed = paired_seed(5);
  const RunResult r = run(cfg);
  const auto third = std::find_if(r.records.begin(), r.records.end(),
                                  [&](const auto& x) { return x.iteration > 0 && x.source == Source::kIS1 && x.is1_count == cfg.n0_is1 + 3; });
  REQUIRE(third != r.records.end());
  CHECK(third->e_is2 < 0.05);
}

TEST_CASE("GMFBO with a perfect twin drives the kernel to full coupling") {
  RunConfig cfg = calibrated();
  cfg.twin = perfect_twin();
  cfg.seed = paired_seed(3);
  const RunResult r = run(cfg);
  const auto last = r.records.back();
  REQUIRE(count(r.records, [](const auto& x) { return x.source == Source::kIS3; }) > 0);
  CHECK(last.e_is2 < 1e-3);
  CHECK(last.l_gamma0 == 2.0);
  CHECK(sampling_cost(cfg.s_prime, FidelityState<double>::adaptive_state(last.e_is2, cfg.s_prime, cfg.beta)) == 0.1);
}

TEST_CASE("a perfect twin is sampled more often than a mismatched one") {
  RunConfig good = calibrated();
  good.twin = perfect_twin();
  RunConfig bad = calibrated();
  double frac_good = 0.0, frac_bad = 0.0;
  auto twin_share = [](const RunResult& r) {
    int loop = 0, twin = 0;
    for (const auto& x : r.records)
      if (x.iteration > 0 && x.source != Source::kIS3) {
        ++loop;
        twin += x.fidelity < 1.0 ? 1 : 0;
      }
    return static_cast<double>(twin) / loop;
  };
  for (int i = 1; i <= 20; ++i) {
    good.seed = bad.seed = paired_seed(i);
    frac_good += twin_share(run(good));
    frac_bad += twin_share(run(bad));
  }
  MESSAGE("mean twin share: perfect " << frac_good / 20 << ", mismatched " << frac_bad / 20);
  CHECK(frac_good > frac_bad);
}

TEST_CASE("returned gains match the grid optimum on the noise-free plant") {
  RunConfig base = calibrated();
  base.objective.noise_std = 0.0;
  const TrueGrid grid = true_grid(base.plant, nullptr, base.box, base.objective, 50);
  const double cell_kp = (base.box.kp_max - base.box.kp_min) / 49.0;
  const double cell_kd = (base.box.kd_max - base.box.kd_min) / 49.0;
  auto within_cell = [&](const ControllerGains& k) {
    return std::abs(k.kp - grid.argmin.kp) <= cell_kp * (1 + 1e-9) &&
           std::abs(k.kd - grid.argmin.kd) <= cell_kd * (1 + 1e-9);
  };
  for (const auto& [method, iterations] : {std::pair{Method::kGmfbo, 20}, std::pair{Method::kBaselineBo, 30}}) {
    RunConfig cfg = base;
    cfg.method = method;
    cfg.iterations = iterations;
    int hits = 0;
    for (int i = 1; i <= 20; ++i) {
      cfg.seed = paired_seed(i);
      hits += within_cell(run(cfg).k_star) ? 1 : 0;
    }
    CAPTURE(to_string(method));
    MESSAGE(to_string(method) << " within one cell in " << hits << "/20 seeds");
    CHECK(hits >= 16);
  }
}

TEST_CASE("non-stationary event switches the target after the trigger") {
  RunConfig cfg = calibrated(Method::kBaselineBo);
  cfg.objective.noise_std = 0.0;
  cfg.event = NonStationaryEvent{2.0, 4};
  cfg.seed = 11;
  const RunResult r = run(cfg);
  CHECK(r.event_after_is1 == 4);
  const PlantConfig changed = set_friction_scale(cfg.plant, 2.0);
  for (const auto& x : r.records) {
    if (x.source != Source::kIS1) continue;
    const PlantConfig& plant = x.is1_count > 4 ? changed : cfg.plant;
    CHECK(x.g_true == objective_noise_free(compute_metrics(simulate(x.gains, plant), cfg.plant), cfg.objective));
  }

  RunConfig unit = cfg;
  unit.event = NonStationaryEvent{1.0, 4};
  RunConfig none = cfg;
  none.event.reset();
  CHECK(same_records(run(unit).records, run(none).records));
}

TEST_CASE("a single initial target point is enough to start") {
  RunConfig cfg = calibrated(Method::kBaselineBo);
  cfg.n0_is1 = 1;
  cfg.iterations = 3;
  const RunResult r = run(cfg);
  CHECK(r.records.size() == 4);
  CHECK(r.fit_fallbacks >= 1);
}
