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

#include "gmfbo/bench.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <fstream>
#include <limits>
#include <mutex>
#include <thread>

#include "gmfbo/design.hpp"
#include "gmfbo/errors.hpp"

namespace gmfbo {
namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr double kMinDenominator = 1e-9;

// Runs f(0..n-1) on up to `jobs` threads. The first exception by task index
// is rethrown after all workers have joined.
template <class F>
void parallel_for(int n, int jobs, F&& f) {
  std::atomic<int> next{0};
  std::mutex mu;
  int failed_index = n;
  std::exception_ptr failure;
  auto worker = [&] {
    for (int i = next++; i < n; i = next++) {
      try {
        f(i);
      } catch (...) {
        std::lock_guard lock(mu);
        if (i < failed_index) {
          failed_index = i;
          failure = std::current_exception();
        }
      }
    }
  };
  const int workers = std::clamp(jobs, 1, std::max(1, n));
  {
    std::vector<std::jthread> pool;
    for (int j = 1; j < workers; ++j) pool.emplace_back(worker);
    worker();
  }
  if (failure) std::rethrow_exception(failure);
}

std::ofstream open_csv(const std::filesystem::path& path) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  return out;
}

void close_csv(std::ofstream& out, const std::filesystem::path& path) {
  out.close();
  if (!out) throw IoError("write failed: " + path.string());
}

// Per-run step functions; NaN before the first defined value.
std::vector<double> best_after_is1(std::span<const IterationRecord> records, int skip, int budget) {
  std::vector<double> best(static_cast<std::size_t>(budget), kNaN);
  double running = kNaN;
  int count = 0;
  for (const auto& r : records) {
    if (r.source != Source::kIS1 || r.is1_count <= skip) continue;
    running = std::isnan(running) ? r.g_true : std::min(running, r.g_true);
    if (++count > budget) break;
    best[static_cast<std::size_t>(count - 1)] = running;
  }
  for (int c = std::max(count, 1); c < budget; ++c)
    best[static_cast<std::size_t>(c)] = best[static_cast<std::size_t>(c - 1)];
  return best;
}

struct IterationTrace {
  std::vector<double> best, cost, mismatch;
};

IterationTrace trace_by_iteration(std::span<const IterationRecord> records, int skip, int iterations) {
  const auto n = static_cast<std::size_t>(iterations + 1);
  IterationTrace t{std::vector<double>(n, kNaN), std::vector<double>(n, kNaN), std::vector<double>(n, kNaN)};
  double best = kNaN;
  for (const auto& r : records) {
    if (r.iteration < 0 || r.iteration > iterations) continue;
    const auto i = static_cast<std::size_t>(r.iteration);
    if (r.source == Source::kIS1 && r.is1_count > skip) best = std::isnan(best) ? r.g_true : std::min(best, r.g_true);
    t.best[i] = best;
    t.cost[i] = r.cumulative_cost;
    t.mismatch[i] = r.e_is2;
  }
  // Iterations without records (none in practice) carry the previous value.
  for (std::size_t i = 1; i < n; ++i) {
    if (std::isnan(t.cost[i])) {
      t.best[i] = t.best[i - 1];
      t.cost[i] = t.cost[i - 1];
      t.mismatch[i] = t.mismatch[i - 1];
    }
  }
  return t;
}

std::vector<CurvePoint> aggregate(const std::vector<std::vector<double>>& per_run, double x0) {
  std::vector<CurvePoint> curve;
  if (per_run.empty()) return curve;
  const std::size_t n = per_run.front().size();
  std::vector<double> column(per_run.size());
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t r = 0; r < per_run.size(); ++r) column[r] = per_run[r][i];
    curve.push_back({x0 + static_cast<double>(i), mean_ci(column)});
  }
  return curve;
}

MethodSummary summarize(Method method, std::vector<RunOutcome> runs, const BenchmarkSummary& ctx, int iterations) {
  MethodSummary m;
  m.method = method;
  std::vector<double> n_star;
  std::vector<std::vector<double>> is1_curves, best, cost, mismatch;
  for (RunOutcome& run : runs) {
    const auto hit = is1_to_threshold(run.result.records, ctx.threshold, ctx.skip_is1);
    run.censored = !hit || *hit > ctx.is1_budget;
    run.n_star = run.censored ? ctx.is1_budget : *hit;
    m.censored += run.censored ? 1 : 0;
    n_star.push_back(run.n_star);
    is1_curves.push_back(best_after_is1(run.result.records, ctx.skip_is1, ctx.is1_budget));
    IterationTrace t = trace_by_iteration(run.result.records, ctx.skip_is1, iterations);
    best.push_back(std::move(t.best));
    cost.push_back(std::move(t.cost));
    mismatch.push_back(std::move(t.mismatch));
  }
  m.n_star = mean_ci(n_star);
  m.best_vs_is1 = aggregate(is1_curves, 1.0);
  m.best_vs_iteration = aggregate(best, 0.0);
  m.cost_vs_iteration = aggregate(cost, 0.0);
  m.mismatch_vs_iteration = aggregate(mismatch, 0.0);
  m.runs = std::move(runs);
  return m;
}

std::string method_file_stem(Method m) { return std::string(to_string(m)); }

}  // namespace

ObjectiveSpec CalibrationResult::apply(ObjectiveSpec spec) const {
  spec.means = means;
  spec.stds = stds;
  spec.weights = weights;
  return spec;
}

CalibrationResult calibrate_weights(const PlantConfig& plant, const GainBox& box, int probe_count,
                                    std::uint64_t seed, const Eigen::Vector4d& weights) {
  if (probe_count < 2) throw ConfigError("calibration.probe_count", "must be at least 2");
  Rng rng = make_rng(seed, Stream::kCalibration);
  const Eigen::MatrixXd design = latin_hypercube(probe_count, 2, rng);
  Eigen::MatrixXd metrics(probe_count, 4);
  for (int i = 0; i < probe_count; ++i) {
    const ControllerGains k = box.denormalize(design.row(i).transpose());
    metrics.row(i) = compute_metrics(simulate(k, plant), plant).as_vector().transpose();
  }
  CalibrationResult out;
  out.means = metrics.colwise().mean().transpose();
  const Eigen::MatrixXd centered = metrics.rowwise() - out.means.transpose();
  out.stds = (centered.array().square().colwise().sum() / (probe_count - 1)).sqrt().transpose();
  out.stds = out.stds.cwiseMax(kCalibrationStdFloor);
  out.weights = weights;
  out.probe_count = probe_count;
  out.seed = seed;
  return out;
}

TrueGrid true_grid(const PlantConfig& plant, const TwinMismatchConfig* twin, const GainBox& box,
                   const ObjectiveSpec& spec, int resolution) {
  if (resolution < 2) throw ConfigError("truegrid.resolution", "must be at least 2");
  TrueGrid grid;
  grid.resolution = resolution;
  const int n = resolution * resolution;
  grid.target.resize(n);
  if (twin) {
    grid.twin.resize(n);
    grid.relative_error.resize(n);
  }
  grid.optimum = std::numeric_limits<double>::infinity();
  double error_sum = 0.0;
  int error_count = 0;
  for (int i = 0; i < resolution; ++i) {
    for (int j = 0; j < resolution; ++j) {
      const Eigen::Vector2d unit(i / (resolution - 1.0), j / (resolution - 1.0));
      const ControllerGains k = box.denormalize(unit);
      const int idx = i * resolution + j;
      grid.gains.push_back(k);
      const double g = objective_noise_free(compute_metrics(simulate(k, plant), plant), spec);
      grid.target(idx) = g;
      if (g < grid.optimum) {
        grid.optimum = g;
        grid.argmin = k;
      }
      if (twin) {
        const double g2 = objective_noise_free(compute_metrics(simulate(k, plant, twin), plant), spec);
        grid.twin(idx) = g2;
        if (std::abs(g) < kMinDenominator) {
          grid.relative_error(idx) = kNaN;
        } else {
          grid.relative_error(idx) = std::abs(g2 - g) / std::abs(g);
          error_sum += grid.relative_error(idx);
          ++error_count;
        }
      }
    }
  }
  grid.mean_relative_error = error_count > 0 ? error_sum / error_count : 0.0;
  return grid;
}

MeanCi mean_ci(std::span<const double> values) {
  double sum = 0.0;
  int n = 0;
  for (double v : values)
    if (!std::isnan(v)) {
      sum += v;
      ++n;
    }
  if (n == 0) return {kNaN, kNaN, kNaN};
  const double mean = sum / n;
  if (n == 1) return {mean, mean, mean};
  double ss = 0.0;
  for (double v : values)
    if (!std::isnan(v)) ss += (v - mean) * (v - mean);
  const double half = 1.96 * std::sqrt(ss / (n - 1)) / std::sqrt(static_cast<double>(n));
  return {mean, mean - half, mean + half};
}

std::optional<int> is1_to_threshold(std::span<const IterationRecord> records, double threshold, int skip_is1) {
  for (const auto& r : records) {
    if (r.source != Source::kIS1 || r.is1_count <= skip_is1) continue;
    if (r.g_true <= threshold) return r.is1_count - skip_is1;
  }
  return std::nullopt;
}

const MethodSummary& BenchmarkSummary::at(Method method) const {
  for (const auto& m : methods)
    if (m.method == method) return m;
  throw Error("benchmark summary has no method " + std::string(to_string(method)));
}

std::vector<std::uint64_t> experiment_seeds(std::uint64_t master, int n) {
  std::vector<std::uint64_t> seeds;
  for (int i = 0; i < n; ++i) seeds.push_back(derive_seed(master, Stream::kExperiment, static_cast<std::uint64_t>(i)));
  return seeds;
}

BenchmarkSummary monte_carlo(std::span<const Method> methods, const RunConfig& base, const BenchSettings& settings,
                             std::uint64_t master_seed) {
  const TrueGrid grid = true_grid(base.plant, nullptr, base.box, base.objective, settings.grid_resolution);
  return monte_carlo(methods, base, settings, master_seed, grid.optimum);
}

BenchmarkSummary monte_carlo(std::span<const Method> methods, const RunConfig& base, const BenchSettings& settings,
                             std::uint64_t master_seed, double optimum, int skip_is1) {
  if (settings.n_exper < 1) throw ConfigError("bench.n_exper", "must be at least 1");
  validate(base);
  BenchmarkSummary summary;
  summary.seeds = experiment_seeds(master_seed, settings.n_exper);
  summary.optimum = optimum;
  summary.threshold = optimum + settings.margin;
  summary.skip_is1 = skip_is1;
  summary.is1_budget = base.n0_is1 + base.iterations - skip_is1;

  const int n_seeds = settings.n_exper;
  const int n_tasks = static_cast<int>(methods.size()) * n_seeds;
  std::vector<RunOutcome> outcomes(static_cast<std::size_t>(n_tasks));
  parallel_for(n_tasks, settings.jobs, [&](int task) {
    RunConfig cfg = base;
    cfg.method = methods[static_cast<std::size_t>(task / n_seeds)];
    cfg.seed = summary.seeds[static_cast<std::size_t>(task % n_seeds)];
    RunOutcome& out = outcomes[static_cast<std::size_t>(task)];
    out.seed = cfg.seed;
    out.result = run(cfg);
  });

  for (std::size_t m = 0; m < methods.size(); ++m) {
    std::vector<RunOutcome> runs(std::make_move_iterator(outcomes.begin() + static_cast<std::ptrdiff_t>(m * n_seeds)),
                                 std::make_move_iterator(outcomes.begin() + static_cast<std::ptrdiff_t>((m + 1) * n_seeds)));
    summary.methods.push_back(summarize(methods[m], std::move(runs), summary, base.iterations));
  }
  return summary;
}

std::vector<std::pair<int, int>> default_ablation_grid() {
  return {{1, 10}, {2, 10}, {3, 10}, {4, 10}, {5, 10}, {10, 10}, {2, 5}, {2, 20}, {2, 30}};
}

std::vector<AblationCell> ablation_grid(std::span<const std::pair<int, int>> grid, std::span<const Method> methods,
                                        const RunConfig& base, const BenchSettings& settings,
                                        std::uint64_t master_seed) {
  if (grid.empty()) throw ConfigError("ablation.cells", "grid must not be empty");
  const TrueGrid truth = true_grid(base.plant, nullptr, base.box, base.objective, settings.grid_resolution);
  std::vector<AblationCell> cells;
  for (const auto& [n0_is1, n0_is2] : grid) {
    RunConfig cfg = base;
    cfg.n0_is1 = n0_is1;
    cfg.n0_is2 = n0_is2;
    cells.push_back({n0_is1, n0_is2, monte_carlo(methods, cfg, settings, master_seed, truth.optimum)});
  }
  return cells;
}

NonStationarySummary nonstationary_scenario(const RunConfig& base, std::span<const Method> methods,
                                            const BenchSettings& settings, std::uint64_t master_seed) {
  RunConfig cfg = base;
  if (!cfg.event) cfg.event = NonStationaryEvent{};
  NonStationarySummary out;
  out.event = *cfg.event;
  out.optimum_before =
      true_grid(cfg.plant, nullptr, cfg.box, cfg.objective, settings.grid_resolution).optimum;
  const PlantConfig changed = set_friction_scale(cfg.plant, cfg.event->friction_factor);
  const double optimum_after = true_grid(changed, nullptr, cfg.box, cfg.objective, settings.grid_resolution).optimum;
  out.summary = monte_carlo(methods, cfg, settings, master_seed, optimum_after, cfg.event->trigger_is1);

  for (const auto& m : out.summary.methods) {
    MismatchShift shift;
    double before = 0.0, after = 0.0;
    for (const auto& run : m.runs) {
      const auto& records = run.result.records;
      if (run.result.event_after_is1 < 0) continue;
      const auto first_post = std::find_if(records.begin(), records.end(), [&](const IterationRecord& r) {
        return r.source == Source::kIS1 && r.is1_count > run.result.event_after_is1;
      });
      if (first_post == records.begin() || first_post == records.end()) continue;
      before += std::prev(first_post)->e_is2;
      after += records.back().e_is2;
      ++shift.runs;
    }
    if (shift.runs > 0) {
      shift.before = before / shift.runs;
      shift.after = after / shift.runs;
    } else {
      shift.before = shift.after = kNaN;
    }
    out.mismatch.push_back(shift);
  }
  return out;
}

void write_iteration_csv(const std::filesystem::path& path, std::span<const IterationRecord> records) {
  std::ofstream out = open_csv(path);
  out << "iter,source,fidelity,kp,kd,g,g_true,bar_sigma_c,e_is2,l_gamma0,cost,cumulative_cost,best_is1,"
         "is1_count,exploration,shortfall\n";
  for (const auto& r : records) {
    out << fmt::format("{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n", r.iteration, to_string(r.source),
                       r.fidelity, r.gains.kp, r.gains.kd, r.g, r.g_true, r.bar_sigma_c, r.e_is2, r.l_gamma0, r.cost,
                       r.cumulative_cost, r.best_is1, r.is1_count, r.exploration ? 1 : 0, r.shortfall ? 1 : 0);
  }
  close_csv(out, path);
}

void write_curve_csv(const std::filesystem::path& path, std::span<const CurvePoint> curve, const char* x_column,
                     const char* y_column) {
  std::ofstream out = open_csv(path);
  out << fmt::format("{},{},ci_lo,ci_hi\n", x_column, y_column);
  for (const auto& p : curve) out << fmt::format("{},{},{},{}\n", p.x, p.y.mean, p.y.lo, p.y.hi);
  close_csv(out, path);
}

void write_summary_csv(const std::filesystem::path& path, const BenchmarkSummary& summary) {
  std::ofstream out = open_csv(path);
  out << "method,n_exper,n_star,ci_lo,ci_hi,censored,is1_budget,threshold,final_cost,final_best\n";
  for (const auto& m : summary.methods) {
    const double cost = m.cost_vs_iteration.empty() ? kNaN : m.cost_vs_iteration.back().y.mean;
    const double best = m.best_vs_iteration.empty() ? kNaN : m.best_vs_iteration.back().y.mean;
    out << fmt::format("{},{},{},{},{},{},{},{},{},{}\n", to_string(m.method), m.runs.size(),
                       render_n_star(m, summary.is1_budget), m.n_star.lo, m.n_star.hi, m.censored,
                       summary.is1_budget, summary.threshold, cost, best);
  }
  close_csv(out, path);
}

std::string render_n_star(const MethodSummary& m, int budget) {
  if (!m.runs.empty() && m.censored == static_cast<int>(m.runs.size())) return fmt::format(">{}", budget);
  return fmt::format("{:.2f}", m.n_star.mean);
}

void write_ablation_csv(const std::filesystem::path& path, std::span<const AblationCell> cells,
                        std::span<const Method> methods) {
  std::ofstream out = open_csv(path);
  out << "n0_is1,n0_is2";
  for (Method m : methods) out << fmt::format(",{0}_n_star,{0}_censored", to_string(m));
  out << "\n";
  for (const auto& cell : cells) {
    out << cell.n0_is1 << ',' << cell.n0_is2;
    for (Method m : methods) {
      const MethodSummary& s = cell.summary.at(m);
      out << ',' << render_n_star(s, cell.summary.is1_budget) << ',' << s.censored;
    }
    out << "\n";
  }
  close_csv(out, path);
}

void write_truegrid_csvs(const std::filesystem::path& objective_path, const std::filesystem::path& error_path,
                         const TrueGrid& grid) {
  std::ofstream obj = open_csv(objective_path);
  obj << "kp,kd,g\n";
  for (std::size_t i = 0; i < grid.gains.size(); ++i)
    obj << fmt::format("{},{},{}\n", grid.gains[i].kp, grid.gains[i].kd, grid.target(static_cast<Eigen::Index>(i)));
  close_csv(obj, objective_path);

  std::ofstream err = open_csv(error_path);
  err << "kp,kd,g_twin,relative_error\n";
  if (grid.relative_error.size() > 0)
    for (std::size_t i = 0; i < grid.gains.size(); ++i) {
      const auto idx = static_cast<Eigen::Index>(i);
      err << fmt::format("{},{},{},{}\n", grid.gains[i].kp, grid.gains[i].kd, grid.twin(idx),
                         grid.relative_error(idx));
    }
  close_csv(err, error_path);
}

void export_benchmark(const std::filesystem::path& dir, const BenchmarkSummary& summary) {
  write_summary_csv(dir / "summary.csv", summary);
  for (const auto& m : summary.methods) {
    const std::string stem = method_file_stem(m.method);
    write_curve_csv(dir / "curves" / (stem + ".csv"), m.best_vs_is1);
    write_curve_csv(dir / "curves" / (stem + "_best_by_iteration.csv"), m.best_vs_iteration, "iteration");
    write_curve_csv(dir / "curves" / (stem + "_cost_by_iteration.csv"), m.cost_vs_iteration, "iteration",
                    "mean_cost");
    write_curve_csv(dir / "curves" / (stem + "_mismatch_by_iteration.csv"), m.mismatch_vs_iteration, "iteration",
                    "mean_e_is2");
    for (std::size_t i = 0; i < m.runs.size(); ++i)
      write_iteration_csv(dir / "iterations" / fmt::format("{}_{:02}.csv", stem, i), m.runs[i].result.records);
  }
}

}  // namespace gmfbo
