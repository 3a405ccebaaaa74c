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

#include "gmfbo/gmfbo.hpp"

#include <cmath>
#include <limits>
#include <memory>

#include "gmfbo/acquisition.hpp"
#include "gmfbo/design.hpp"
#include "gmfbo/errors.hpp"

namespace gmfbo {

std::string_view to_string(Method method) {
  switch (method) {
    case Method::kGmfbo: return "gmfbo";
    case Method::kBaselineBo: return "bo_ei";
    case Method::kMfboCaEi: return "mfbo_caei";
    case Method::kMfboModified: return "mfbo_modified";
  }
  return "?";
}

Method parse_method(std::string_view name) {
  for (Method m : {Method::kGmfbo, Method::kBaselineBo, Method::kMfboCaEi, Method::kMfboModified})
    if (to_string(m) == name) return m;
  throw ConfigError("method", "unknown method '" + std::string(name) +
                                  "'; expected one of {gmfbo, bo_ei, mfbo_caei, mfbo_modified}");
}

void validate(const RunConfig& cfg) {
  if (cfg.iterations < 1) throw ConfigError("gmfbo.iterations", "must be at least 1");
  if (cfg.n0_is1 < 1) throw ConfigError("gmfbo.n0_is1", "must be at least 1");
  if (cfg.n0_is2 < 1) throw ConfigError("gmfbo.n0_is2", "must be at least 1");
  if (cfg.n_c < 1) throw ConfigError("gmfbo.n_c", "must be at least 1");
  if (!(cfg.s_prime > 0.0 && cfg.s_prime < 1.0)) throw ConfigError("gmfbo.s_prime", "must lie in (0, 1)");
  if (!(cfg.alpha > 0.0)) throw ConfigError("gmfbo.alpha", "must be positive");
  if (!(cfg.beta > 0.0)) throw ConfigError("gmfbo.beta", "must be positive");
  if (!(cfg.rho >= 0.0)) throw ConfigError("gmfbo.rho", "must be non-negative");
  if (!(cfg.e_init >= 0.0)) throw ConfigError("gmfbo.e_init", "must be non-negative");
  if (!(cfg.fixed_l_gamma0 > 0.0)) throw ConfigError("gmfbo.fixed_l_gamma0", "must be positive");
  if (!(cfg.fixed_cost > 0.0 && cfg.fixed_cost <= 1.0)) throw ConfigError("gmfbo.fixed_cost", "must lie in (0, 1]");
  if (cfg.attempts_per_slot < 1) throw ConfigError("gmfbo.attempts_per_slot", "must be at least 1");
  if (!(cfg.draw_std_fraction >= 0.0)) throw ConfigError("gmfbo.draw_std_fraction", "must be non-negative");
  if (cfg.correction_budget < 4) throw ConfigError("gmfbo.correction_budget", "must be at least 4");
  if (cfg.event) {
    if (!(cfg.event->friction_factor > 0.0)) throw ConfigError("event.friction_factor", "must be positive");
    if (cfg.event->trigger_is1 < 0) throw ConfigError("event.trigger_is1", "must be non-negative");
  }
  validate(cfg.plant);
}

double unbiased_cost(std::span<const IterationRecord> records) {
  double total = 0.0;
  for (const auto& r : records) total += r.fidelity;
  return total;
}

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

struct Strategy {
  bool multi_fidelity = true;
  bool adaptive = true;
  bool correction = false;
  bool twin_rerun = false;
};

class Runner {
 public:
  Runner(const RunConfig& cfg, const Sources& sources, Strategy strategy)
      : cfg_(cfg), src_(sources), st_(strategy), noise_(make_rng(cfg.seed, Stream::kObservationNoise)) {
    if (src_.target == nullptr || src_.twin == nullptr) throw Error("run: target and twin sources are required");
    if (cfg_.event && src_.target_after_event == nullptr)
      throw Error("run: non-stationary event configured without a post-event source");
    fs_ = st_.adaptive ? FidelityState<double>::adaptive_state(cfg_.e_init, cfg_.s_prime, cfg_.beta)
                       : FidelityState<double>::fixed_state(cfg_.fixed_l_gamma0, cfg_.fixed_cost, cfg_.s_prime);
    priors_ = cfg_.priors;
    priors_.single_source = !st_.multi_fidelity;
    if (st_.multi_fidelity)
      fidelities_ = {cfg_.s_prime, 1.0};
    else
      fidelities_ = {1.0};
  }

  InitialDesign initial_design() {
    initialize();
    return {data_, records_};
  }

  RunResult run() {
    initialize();
    for (int it = 1; it <= cfg_.iterations; ++it) step(it);
    result_.k_star = k_star_;
    result_.best_observed = best_is1_;
    result_.records = std::move(records_);
    return result_;
  }

 private:
  const InformationSource& target_source() {
    if (cfg_.event && result_.event_after_is1 < 0 && is1_count_ >= cfg_.event->trigger_is1)
      result_.event_after_is1 = is1_count_;
    return result_.event_after_is1 >= 0 ? *src_.target_after_event : *src_.target;
  }

  double observe(double clean) {
    if (cfg_.objective.noise_std <= 0.0) return clean;
    std::normal_distribution<double> n(0.0, cfg_.objective.noise_std);
    return clean + n(noise_);
  }

  void push(int iteration, Source source, double fidelity, const ControllerGains& k, double g, double g_true,
            double bar_sigma = kNaN) {
    data_.add({cfg_.box.normalize(k), fidelity}, g, source);
    IterationRecord r;
    r.iteration = iteration;
    r.source = source;
    r.fidelity = fidelity;
    r.gains = k;
    r.g = g;
    r.g_true = g_true;
    r.bar_sigma_c = bar_sigma;
    r.e_is2 = fs_.e_is2;
    r.l_gamma0 = fs_.l_gamma0;
    r.cost = sampling_cost(fidelity, fs_);
    cumulative_ += fidelity;
    r.cumulative_cost = cumulative_;
    if (source == Source::kIS1) {
      ++is1_count_;
      if (is1_count_ == 1 || g < best_is1_) {
        best_is1_ = g;
        k_star_ = k;
      }
    }
    r.best_is1 = is1_count_ > 0 ? best_is1_ : kNaN;
    r.is1_count = is1_count_;
    records_.push_back(r);
  }

  struct Is1Outcome {
    StepResponse response;
    double g;
  };

  Is1Outcome query_target(int iteration, const ControllerGains& k) {
    const InformationSource& target = target_source();
    StepResponse resp = target.respond(k);
    const double clean = objective_noise_free(compute_metrics(resp, cfg_.plant), cfg_.objective);
    const double g = observe(clean);
    push(iteration, Source::kIS1, 1.0, k, g, clean);
    return {std::move(resp), g};
  }

  void query_twin(int iteration, const ControllerGains& k) {
    const double clean = objective_noise_free(compute_metrics(src_.twin->respond(k), cfg_.plant), cfg_.objective);
    push(iteration, Source::kIS2, cfg_.s_prime, k, observe(clean), clean);
  }

  void initialize() {
    Rng lhs1 = make_rng(cfg_.seed, Stream::kInitialDesign, 0);
    Rng lhs2 = make_rng(cfg_.seed, Stream::kInitialDesign, 1);
    const Eigen::MatrixXd d1 = latin_hypercube(cfg_.n0_is1, 2, lhs1);
    std::vector<StepResponse> is1_responses;
    std::vector<ControllerGains> is1_gains;
    for (Eigen::Index i = 0; i < d1.rows(); ++i) {
      const ControllerGains k = cfg_.box.denormalize(d1.row(i).transpose());
      is1_responses.push_back(query_target(0, k).response);
      is1_gains.push_back(k);
    }
    if (st_.multi_fidelity) {
      const Eigen::MatrixXd d2 = latin_hypercube(cfg_.n0_is2, 2, lhs2);
      for (Eigen::Index i = 0; i < d2.rows(); ++i) query_twin(0, cfg_.box.denormalize(d2.row(i).transpose()));
    }
    if (st_.correction && cfg_.is3_on_init)
      for (std::size_t i = 0; i < is1_gains.size(); ++i) correct(0, is1_gains[i], is1_responses[i]);
  }

  // Correction step after an IS1 query: rebuild D_c, retrain GP_c, add the
  // accepted IS3 samples and refresh the mismatch estimate.
  void correct(int iteration, const ControllerGains& k, const StepResponse& target_response) {
    const StepResponse twin_response = src_.twin->respond(k);
    CorrectionOptions options;
    options.budget = cfg_.correction_budget;
    options.accumulate = cfg_.accumulate_dc;
    options.priors = cfg_.correction_priors;
    dc_ = update_correction_dataset(dc_, k, twin_response, target_response, options);
    if (dc_.size() < 4) return;

    const auto index = static_cast<std::uint64_t>(is1_count_);
    const CorrectionModel model =
        train_correction_model(dc_, derive_seed(cfg_.seed, Stream::kCorrection, index), cfg_.correction_priors);
    GateArgs gate;
    gate.alpha = cfg_.alpha;
    gate.rho = cfg_.rho;
    gate.attempts_per_slot = cfg_.attempts_per_slot;
    gate.draw_std_fraction = cfg_.draw_std_fraction;
    const Is3Batch batch =
        generate_is3_batch(model, k, cfg_.n_c, gate, *src_.twin, cfg_.plant, cfg_.box, cfg_.objective,
                           cfg_.s_prime, derive_seed(cfg_.seed, Stream::kCandidateDraw, index));
    if (batch.shortfall) {
      ++result_.shortfalls;
      if (!records_.empty()) records_.back().shortfall = true;
    }
    for (const Is3Sample& s : batch.accepted) {
      push(iteration, Source::kIS3, cfg_.s_prime, s.gains, s.g_corrected, s.g_twin, s.bar_sigma_c);
      history_.push_back({s.g_corrected, s.g_twin});
    }
    update_mismatch(iteration);
  }

  void update_mismatch(int iteration) {
    fs_ = fs_.with_mismatch(estimate_mismatch(history_, cfg_.e_init));
    for (auto it = records_.rbegin(); it != records_.rend() && it->iteration == iteration; ++it) {
      it->e_is2 = fs_.e_is2;
      it->l_gamma0 = fs_.l_gamma0;
    }
  }

  std::optional<PosteriorGP<double>> fit(int iteration) {
    // A single observation carries no lengthscale information.
    FitResult fitted;
    if (data_.size() < 2) {
      fitted.hyperparams = prior_median(priors_);
      fitted.fallback = true;
    } else {
      fitted = fit_hyperparameters(data_, fs_, priors_, derive_seed(cfg_.seed, Stream::kHyperparameters, iteration));
    }
    if (fitted.fallback) ++result_.fit_fallbacks;
    try {
      return PosteriorGP<double>(data_, fitted.hyperparams, fs_);
    } catch (const NumericalFailure&) {
      ++result_.fit_fallbacks;
    }
    try {
      return PosteriorGP<double>(data_, prior_median(priors_), fs_);
    } catch (const NumericalFailure&) {
      return std::nullopt;
    }
  }

  void step(int iteration) {
    const std::optional<PosteriorGP<double>> model = fit(iteration);
    Candidate c;
    const std::uint64_t acq_seed = derive_seed(cfg_.seed, Stream::kAcquisition, iteration);
    if (model) {
      const AcquisitionState state = AcquisitionState::from_dataset(data_, fidelities_);
      c = select_candidate(*model, state, acq_seed);
    } else {
      Rng rng(acq_seed);
      std::uniform_real_distribution<double> unit(0.0, 1.0);
      c.unit_gains = {unit(rng), unit(rng)};
      c.fidelity = 1.0;
      c.exploration = true;
    }
    const ControllerGains k = cfg_.box.clamp(cfg_.box.denormalize(c.unit_gains));

    if (c.fidelity >= 1.0) {
      const Is1Outcome out = query_target(iteration, k);
      records_.back().exploration = c.exploration;
      if (st_.correction) {
        correct(iteration, k, out.response);
      } else if (st_.twin_rerun) {
        query_twin(iteration, k);
        history_.push_back({out.g, records_.back().g_true});
        if (st_.adaptive) update_mismatch(iteration);
      }
    } else {
      query_twin(iteration, k);
    }
  }

  const RunConfig& cfg_;
  Sources src_;
  Strategy st_;
  Rng noise_;
  FidelityState<double> fs_;
  HyperPriors priors_;
  std::vector<double> fidelities_;

  SurrogateDataset<double> data_;
  std::vector<IterationRecord> records_;
  std::vector<MismatchPair> history_;
  CorrectionDataset dc_;
  int is1_count_ = 0;
  double cumulative_ = 0.0;
  double best_is1_ = 0.0;
  ControllerGains k_star_;
  RunResult result_;
};

}  // namespace

InitialDesign initialize_dataset(const RunConfig& cfg, const Sources& sources) {
  Runner runner(cfg, sources, {true, true, false, false});
  return runner.initial_design();
}

RunResult run_gmfbo(const RunConfig& cfg, const Sources& sources) {
  validate(cfg);
  return Runner(cfg, sources, {true, true, true, false}).run();
}

RunResult run_baseline_bo(const RunConfig& cfg, const Sources& sources) {
  validate(cfg);
  return Runner(cfg, sources, {false, false, false, false}).run();
}

RunResult run_mfbo(const RunConfig& cfg, bool adaptive_kernel, const Sources& sources) {
  validate(cfg);
  return Runner(cfg, sources, {true, adaptive_kernel, false, adaptive_kernel}).run();
}

RunResult run(const RunConfig& cfg, const Sources& sources) {
  switch (cfg.method) {
    case Method::kGmfbo: return run_gmfbo(cfg, sources);
    case Method::kBaselineBo: return run_baseline_bo(cfg, sources);
    case Method::kMfboCaEi: return run_mfbo(cfg, false, sources);
    case Method::kMfboModified: return run_mfbo(cfg, true, sources);
  }
  throw Error("run: unknown method");
}

RunResult run(const RunConfig& cfg) {
  const SimulatedSource target(cfg.plant);
  const SimulatedSource twin(cfg.plant, cfg.twin);
  std::unique_ptr<SimulatedSource> after;
  Sources sources{&target, nullptr, &twin};
  if (cfg.event) {
    after = std::make_unique<SimulatedSource>(set_friction_scale(cfg.plant, cfg.event->friction_factor));
    sources.target_after_event = after.get();
  }
  return run(cfg, sources);
}

}  // namespace gmfbo
