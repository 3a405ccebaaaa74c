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

// gmfbo <command> --config FILE [--method M] [--seed S] [--jobs J] [--strict]
//       [--out DIR] [--resolution N]

#include <iostream>

#include "CLI11.hpp"
#include "gmfbo/cli.hpp"
#include "gmfbo/errors.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Guided multi-fidelity Bayesian optimization for controller tuning"};
  app.require_subcommand(1);

  gmfbo::CommandOptions opts;
  std::string method;
  std::uint64_t seed = 0;
  std::string out;
  int resolution = 0;

  struct Command {
    const char* name;
    const char* help;
    int (*fn)(const gmfbo::CommandOptions&, std::ostream&);
  };
  const Command commands[] = {
      {"calibrate", "Fit the objective normalization and write the calibration file", gmfbo::cmd_calibrate},
      {"run", "Run one optimization", gmfbo::cmd_run},
      {"bench", "Monte Carlo comparison of the configured methods", gmfbo::cmd_bench},
      {"ablation", "Initial-dataset size ablation", gmfbo::cmd_ablation},
      {"nonstationary", "Friction change during the run", gmfbo::cmd_nonstationary},
      {"truegrid", "Ground-truth objective and twin error maps", gmfbo::cmd_truegrid},
  };

  for (const auto& c : commands) {
    CLI::App* sub = app.add_subcommand(c.name, c.help);
    sub->add_option("--config", opts.config, "Experiment configuration (JSON)")->required()->check(CLI::ExistingFile);
    sub->add_option("--method", method, "gmfbo, bo_ei, mfbo_caei or mfbo_modified");
    sub->add_option("--seed", seed, "Master seed override");
    sub->add_option("--jobs", opts.jobs, "Worker threads")->check(CLI::PositiveNumber);
    sub->add_flag("--strict", opts.strict, "Fail when a run never reaches the threshold");
    sub->add_option("--out", out, "Output directory (calibration file for calibrate)");
    sub->add_option("--resolution", resolution, "Grid resolution for truegrid")->check(CLI::Range(2, 1000));
  }

  CLI11_PARSE(app, argc, argv);

  const CLI::App* chosen = app.get_subcommands().front();
  if (chosen->count("--method") > 0) opts.method = method;
  if (chosen->count("--seed") > 0) opts.seed = seed;
  if (chosen->count("--out") > 0) opts.out = out;
  if (chosen->count("--resolution") > 0) opts.resolution = resolution;

  try {
    for (const auto& c : commands)
      if (chosen->get_name() == c.name) return c.fn(opts, std::cout);
  } catch (const gmfbo::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return gmfbo::kExitError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return gmfbo::kExitError;
  }
  return gmfbo::kExitError;
}
