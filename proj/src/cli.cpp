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

#include "gmfbo/cli.hpp"

#include <fmt/format.h>
#include <fmt/ostream.h>

#include <fstream>

#include "gmfbo/bench.hpp"
#include "gmfbo/config.hpp"
#include "gmfbo/errors.hpp"
#include "json.hpp"

namespace gmfbo {
namespace {

using json = nlohmann::json;

ExperimentConfig prepare(const CommandOptions& opts) {
  ExperimentConfig cfg = load_config(opts.config);
  if (opts.seed) cfg.run.seed = *opts.seed;
  if (opts.method) cfg.run.method = parse_method(*opts.method);
  if (opts.out) cfg.output = *opts.out;
  ensure_calibrated(cfg);
  return cfg;
}

BenchSettings settings_of(const ExperimentConfig& cfg, const CommandOptions& opts) {
  BenchSettings s = cfg.bench;
  s.jobs = std::max(1, opts.jobs);
  return s;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << text;
  out.close();
  if (!out) throw IoError("write failed: " + path.string());
}

json seeds_json(const BenchmarkSummary& s) {
  json seeds = json::array();
  for (auto seed : s.seeds) seeds.push_back(seed);
  return seeds;
}

void write_manifest(const ExperimentConfig& cfg, const json& provenance) {
  write_text(cfg.output / "manifest.json", to_json(cfg, provenance.dump()));
}

int strict_verdict(const CommandOptions& opts, int censored, std::ostream& log) {
  if (censored == 0 || !opts.strict) return kExitOk;
  fmt::print(log, "strict: {} run(s) never reached the threshold\n", censored);
  return kExitStrictFailure;
}

int total_censored(const BenchmarkSummary& s) {
  int n = 0;
  for (const auto& m : s.methods) n += m.censored;
  return n;
}

void log_summary(std::ostream& log, const BenchmarkSummary& s) {
  fmt::print(log, "threshold {:.4f} (optimum {:.4f}), IS1 budget {}\n", s.threshold, s.optimum, s.is1_budget);
  for (const auto& m : s.methods)
    fmt::print(log, "  {:<14} n* {:>6} [{:.2f}, {:.2f}]  censored {}/{}\n", to_string(m.method),
               render_n_star(m, s.is1_budget), m.n_star.lo, m.n_star.hi, m.censored, m.runs.size());
}

}  // namespace

int cmd_calibrate(const CommandOptions& opts, std::ostream& log) {
  ExperimentConfig cfg = load_config(opts.config);
  if (opts.seed) cfg.calibration.seed = *opts.seed;
  const CalibrationResult cal = calibrate_weights(cfg.run.plant, cfg.run.box, cfg.calibration.probe_count,
                                                  cfg.calibration.seed, cfg.run.objective.weights);
  const std::filesystem::path path = opts.out ? *opts.out : cfg.output / "calibration.json";
  save_calibration(path, cal);
  fmt::print(log, "calibration from {} probes written to {}\n", cal.probe_count, path.string());
  return kExitOk;
}

int cmd_run(const CommandOptions& opts, std::ostream& log) {
  const ExperimentConfig cfg = prepare(opts);
  const RunResult result = run(cfg.run);
  const TrueGrid grid = true_grid(cfg.run.plant, nullptr, cfg.run.box, cfg.run.objective, cfg.bench.grid_resolution);
  const double threshold = grid.optimum + cfg.bench.margin;
  const auto hit = is1_to_threshold(result.records, threshold);
  const double cost = unbiased_cost(result.records);

  write_iteration_csv(cfg.output / "iterations.csv", result.records);
  json summary = {{"method", std::string(to_string(cfg.run.method))},
                  {"seed", cfg.run.seed},
                  {"k_star", {{"kp", result.k_star.kp}, {"kd", result.k_star.kd}}},
                  {"best_observed", result.best_observed},
                  {"threshold", threshold},
                  {"is1_to_threshold", hit ? json(*hit) : json(nullptr)},
                  {"is1_evaluations", result.records.empty() ? 0 : result.records.back().is1_count},
                  {"unbiased_cost", cost},
                  {"fit_fallbacks", result.fit_fallbacks},
                  {"is3_shortfalls", result.shortfalls}};
  write_text(cfg.output / "summary.json", summary.dump(2) + "\n");
  write_manifest(cfg, {{"command", "run"}, {"method", std::string(to_string(cfg.run.method))}});

  fmt::print(log, "{} seed {}: k* = ({:.3f}, {:.3f}), best {:.4f}, IS1 to threshold {}, unbiased cost {:.2f}\n",
             to_string(cfg.run.method), cfg.run.seed, result.k_star.kp, result.k_star.kd, result.best_observed,
             hit ? std::to_string(*hit) : std::string("censored"), cost);
  return strict_verdict(opts, hit ? 0 : 1, log);
}

int cmd_bench(const CommandOptions& opts, std::ostream& log) {
  const ExperimentConfig cfg = prepare(opts);
  const BenchmarkSummary s = monte_carlo(cfg.methods, cfg.run, settings_of(cfg, opts), cfg.run.seed);
  export_benchmark(cfg.output, s);
  write_manifest(cfg, {{"command", "bench"},
                       {"seeds", seeds_json(s)},
                       {"optimum", s.optimum},
                       {"threshold", s.threshold},
                       {"is1_cost_includes_initialization", true}});
  log_summary(log, s);
  return strict_verdict(opts, total_censored(s), log);
}

int cmd_ablation(const CommandOptions& opts, std::ostream& log) {
  const ExperimentConfig cfg = prepare(opts);
  const auto cells = ablation_grid(cfg.ablation.cells, cfg.methods, cfg.run, settings_of(cfg, opts), cfg.run.seed);
  write_ablation_csv(cfg.output / "ablation.csv", cells, cfg.methods);
  int censored = 0;
  json seeds;
  for (const auto& cell : cells) {
    censored += total_censored(cell.summary);
    seeds = seeds_json(cell.summary);
    fmt::print(log, "N0_is1 = {}, N0_is2 = {}\n", cell.n0_is1, cell.n0_is2);
    log_summary(log, cell.summary);
  }
  write_manifest(cfg, {{"command", "ablation"}, {"seeds", seeds}});
  return strict_verdict(opts, censored, log);
}

int cmd_nonstationary(const CommandOptions& opts, std::ostream& log) {
  ExperimentConfig cfg = prepare(opts);
  cfg.run.event = cfg.event;
  const NonStationarySummary ns = nonstationary_scenario(cfg.run, cfg.methods, settings_of(cfg, opts), cfg.run.seed);
  export_benchmark(cfg.output, ns.summary);

  {
    const auto path = cfg.output / "mismatch_shift.csv";
    std::string text = "method,runs,e_before,e_after\n";
    for (std::size_t i = 0; i < ns.summary.methods.size(); ++i)
      text += fmt::format("{},{},{},{}\n", to_string(ns.summary.methods[i].method), ns.mismatch[i].runs,
                          ns.mismatch[i].before, ns.mismatch[i].after);
    write_text(path, text);
  }
  write_manifest(cfg, {{"command", "nonstationary"},
                       {"seeds", seeds_json(ns.summary)},
                       {"optimum_before", ns.optimum_before},
                       {"optimum_after", ns.summary.optimum},
                       {"threshold_after", ns.summary.threshold},
                       {"friction_factor", ns.event.friction_factor},
                       {"trigger_is1", ns.event.trigger_is1}});
  fmt::print(log, "friction x{} after IS1 evaluation {}\n", ns.event.friction_factor, ns.event.trigger_is1);
  log_summary(log, ns.summary);
  for (std::size_t i = 0; i < ns.mismatch.size(); ++i)
    fmt::print(log, "  {:<14} e_is2 {:.3f} -> {:.3f} over {} runs\n", to_string(ns.summary.methods[i].method),
               ns.mismatch[i].before, ns.mismatch[i].after, ns.mismatch[i].runs);
  return strict_verdict(opts, total_censored(ns.summary), log);
}

int cmd_truegrid(const CommandOptions& opts, std::ostream& log) {
  ExperimentConfig cfg = prepare(opts);
  if (opts.resolution) cfg.truegrid_resolution = *opts.resolution;
  const TrueGrid grid = true_grid(cfg.run.plant, &cfg.run.twin, cfg.run.box, cfg.run.objective, cfg.truegrid_resolution);
  write_truegrid_csvs(cfg.output / "truegrid_objective.csv", cfg.output / "truegrid_error.csv", grid);
  write_manifest(cfg, {{"command", "truegrid"},
                       {"optimum", grid.optimum},
                       {"argmin", {{"kp", grid.argmin.kp}, {"kd", grid.argmin.kd}}},
                       {"mean_relative_error", grid.mean_relative_error}});
  fmt::print(log, "{}x{} grid: optimum {:.4f} at ({:.2f}, {:.3f}), mean twin relative error {:.3f}\n",
             grid.resolution, grid.resolution, grid.optimum, grid.argmin.kp, grid.argmin.kd,
             grid.mean_relative_error);
  return kExitOk;
}

}  // namespace gmfbo
