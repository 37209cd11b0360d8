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

#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "nemgan/data.hpp"
#include "nemgan/metrics.hpp"
#include "nemgan/trainer.hpp"

namespace nemgan::runner {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct DatasetConfig {
  std::string kind = "ring";  // ring | grid | skewed | factored
  std::size_t k = 8;
  double radius = 2.0;
  double std = 0.05;
  std::size_t m = 5;
  double spacing = 2.0;
  std::string base = "ring";  // base layout for skewed
  std::vector<double> weights;
  std::size_t factors = 3;
  std::size_t levels = 5;
  std::size_t n = 50000;
};

struct ExperimentConfig {
  DatasetConfig dataset;
  train::ModelConfig model;
  train::TrainConfig train;
  train::EvalConfig eval;
};

// Flat "section.key = value" lines; '#' starts a comment. Sections dataset
// and train are required, model and eval fall back to defaults.
ExperimentConfig parse_config(const std::string& text, const std::string& source = "<config>");
ExperimentConfig load_config(const std::filesystem::path& path);
// Every key, one per line, in a fixed order.
std::string render_config(const ExperimentConfig& cfg);
// SHA-1 of "blob <len>\0<text>", as git hashes file contents.
std::string content_hash(const std::string& text);

// Applies NEMGAN_SEED when set.
void apply_env_overrides(ExperimentConfig& cfg);

data::MixtureSpec make_mixture(const DatasetConfig& cfg);
data::Dataset make_dataset(const ExperimentConfig& cfg);

inline constexpr int kCheckpointVersion = 1;

struct Checkpoint {
  ExperimentConfig config;
  train::TrainingState state;
};

void save_checkpoint(const std::filesystem::path& path, const ExperimentConfig& cfg,
                     const train::TrainingState& state);
Checkpoint load_checkpoint(const std::filesystem::path& path);

std::string metrics_csv_header();
std::string metrics_csv_row(const train::HistoryRow& row);

// One circle per sample, colored by label.
void write_scatter_svg(const std::filesystem::path& path, const ad::Tensor& points,
                       std::span<const std::size_t> labels);

// train: writes config.resolved, metrics.csv, checkpoint.json, manifest.json.
int cmd_train(const std::filesystem::path& config_path, const std::filesystem::path& out_dir,
              std::ostream& log, const train::TrainingHooks& hooks = {});

metrics::MetricsReport cmd_eval(const std::filesystem::path& checkpoint, std::size_t n,
                                std::uint64_t seed, std::ostream& out,
                                const std::optional<std::filesystem::path>& csv = std::nullopt);

struct SampleResult {
  ad::Tensor points;
  std::vector<std::size_t> labels;  // requested mode, or oracle-assigned component
};

SampleResult cmd_sample(const std::filesystem::path& checkpoint, std::size_t n,
                        std::optional<std::size_t> mode, std::uint64_t seed,
                        const std::filesystem::path& csv,
                        const std::optional<std::filesystem::path>& svg = std::nullopt);

struct GradTerm {
  std::string name;
  ad::GradCheckResult result;
};

struct GradcheckReport {
  std::vector<GradTerm> terms;
  double tolerance = 1e-4;
  bool passed() const;
};

GradcheckReport run_gradcheck(const ExperimentConfig& cfg, std::size_t batch = 8,
                              std::size_t max_coords_per_tensor = 48);
int cmd_gradcheck(const std::filesystem::path& config_path, std::ostream& out);

int cmd_bench(const std::filesystem::path& config_path, std::size_t steps, std::ostream& out);

}  // namespace nemgan::runner
