/*
 * Copyright 2026 The nemgan Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *    http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include <cstdlib>
#include <exception>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "nemgan/runner.hpp"

int main(int argc, char** argv) {
  using namespace nemgan;
  CLI::App app{"nemgan: noise-engineered mode-matching GAN on synthetic mixtures"};
  app.require_subcommand(1);

  std::string config, out_dir, checkpoint, csv, svg, eval_csv;
  std::size_t n = 10000, steps = 50;
  std::uint64_t seed = 0;
  std::optional<std::size_t> mode;

  auto* train = app.add_subcommand("train", "Train a model from a config file");
  train->add_option("--config", config, "Config file")->required()->check(CLI::ExistingFile);
  train->add_option("--out", out_dir, "Run directory")->required();

  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on a fresh balanced test set");
  eval->add_option("--checkpoint", checkpoint)->required()->check(CLI::ExistingFile);
  eval->add_option("--n", n, "Generated samples")->check(CLI::PositiveNumber);
  eval->add_option("--seed", seed);
  eval->add_option("--csv", eval_csv, "Append metrics to this CSV");

  auto* sample = app.add_subcommand("sample", "Draw samples from a checkpoint");
  sample->add_option("--checkpoint", checkpoint)->required()->check(CLI::ExistingFile);
  sample->add_option("--n", n)->check(CLI::PositiveNumber);
  sample->add_option("--mode", mode, "Condition on one latent mode");
  sample->add_option("--seed", seed);
  sample->add_option("--out", csv, "Output CSV")->required();
  sample->add_option("--svg", svg, "Optional scatter plot");

  auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference check of every loss term");
  gradcheck->add_option("--config", config)->required()->check(CLI::ExistingFile);

  auto* bench = app.add_subcommand("bench", "Time training steps");
  bench->add_option("--config", config)->required()->check(CLI::ExistingFile);
  bench->add_option("--steps", steps)->check(CLI::PositiveNumber);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train) return runner::cmd_train(config, out_dir, std::cout);
    if (*eval) {
      std::optional<std::filesystem::path> to;
      if (!eval_csv.empty()) to = eval_csv;
      runner::cmd_eval(checkpoint, n, seed, std::cout, to);
      return 0;
    }
    if (*sample) {
      std::optional<std::filesystem::path> plot;
      if (!svg.empty()) plot = svg;
      runner::cmd_sample(checkpoint, n, mode, seed, csv, plot);
      return 0;
    }
    if (*gradcheck) return runner::cmd_gradcheck(config, std::cout);
    if (*bench) return runner::cmd_bench(config, steps, std::cout);
  } catch (const std::exception& e) {
    std::cerr << "nemgan: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
