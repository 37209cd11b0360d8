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
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "nemgan/autodiff.hpp"
#include "nemgan/data.hpp"
#include "nemgan/latent.hpp"
#include "nemgan/metrics.hpp"
#include "nemgan/networks.hpp"
#include "nemgan/objectives.hpp"

namespace nemgan::train {

// V: no supervision, fixed uniform prior. S: inverter supervision, alpha
// frozen. P: supervision plus prior learning.
enum class Variant { kV, kS, kP };

enum class RetrainScope { kBoth, kH2Only };

struct PriorSchedule {
  double warmup_fraction = 0.2;
  double period_fraction = 0.1;
  std::size_t h_epochs = 20;
  std::size_t h_batch = 64;
  std::size_t alpha_steps = 40;
  double alpha_lr = 0.05;
  // alignment ends early once the KL falls to this value
  double alpha_tol = 1e-10;
  std::size_t pool_size = 10000;
  std::size_t align_samples = 10000;
  RetrainScope scope = RetrainScope::kBoth;
};

struct TrainConfig {
  Variant variant = Variant::kV;
  std::size_t batch = 256;
  std::size_t steps = 30000;
  std::size_t d_steps = 1;
  double lr_d = 1e-3;
  double lr_g = 2e-4;
  double lr_h = 1e-3;
  double beta1 = 0.5;
  double beta2 = 0.9;
  double slope = 10.0;
  obj::LossWeights weights;
  PriorSchedule prior;
  double labeled_fraction = 0.01;
  std::uint64_t seed = 1;

  void validate() const;
};

struct ModelConfig {
  std::size_t modes = 0;  // 0: one per mixture component
  double center_scale = 2.0;
  double epsilon = 0.3;
  std::vector<std::size_t> g_hidden{128, 128};
  std::vector<std::size_t> d_hidden{128, 128};
  std::vector<std::size_t> h1_hidden{128, 128};
  std::vector<std::size_t> h2_hidden{64};
  nets::Activation activation = nets::Activation::kRelu;

  nets::NetworkSpecs specs(std::size_t latent_dim, std::size_t data_dim,
                           std::size_t modes) const;
};

struct EvalConfig {
  std::size_t interval = 1000;
  std::size_t n = 10000;
  std::size_t test_per_mode = 500;
  bool clustering = true;
  bool coverage = true;
  bool frechet = true;
};

struct AdamState {
  std::vector<ad::Tensor> m, v;
  std::uint64_t t = 0;

  static AdamState like(const std::vector<ad::Tensor>& params);
};

void adam_step(std::vector<ad::Tensor>& params, const std::vector<ad::Tensor>& grads,
               AdamState& state, double lr, double beta1, double beta2, double eps = 1e-8);

struct Optimizers {
  AdamState d, g, h1, h2;
};

struct TrainingState {
  nets::NetworkSet nets;
  latent::AlphaVector alpha = latent::AlphaVector::uniform(2);
  latent::ModeLayout layout;
  Optimizers opt;
  std::mt19937_64 rng;
  std::uint64_t step = 0;
};

TrainingState init_state(const ModelConfig& model, const TrainConfig& cfg,
                         const data::MixtureSpec& spec);

// One discriminator update followed by one joint update of g, h1 and h2.
// With a non-empty labeled set the joint update also carries the supervised
// cross-entropy on a minibatch of it. Alpha is left untouched.
obj::LossBreakdown train_step(TrainingState& state, const ad::Tensor& real_batch,
                              const TrainConfig& cfg, const data::Samples* labeled = nullptr);

// Supervised cross-entropy fit of the inverter on the labeled subset for
// cfg.prior.h_epochs epochs (h2 only when the retrain scope says so). Returns
// the mean loss of the last epoch.
double fit_inverter(TrainingState& state, const data::Samples& labeled, const TrainConfig& cfg);

struct PriorRoundResult {
  double cc_loss = 0.0;
  obj::PriorVector target;
  std::vector<double> kl_trajectory;
  std::vector<double> alpha_before, alpha_after;
};

// Minimizes KL(current(alpha) || target) over alpha alone with Adam; returns
// the KL value seen at every step plus the final one. Stops early once the KL
// is at most tol.
std::vector<double> align_alpha(latent::AlphaVector& alpha, const obj::PriorVector& target,
                                const obj::AggregateFn& current, std::size_t steps, double lr,
                                double beta1, double beta2,
                                double tol = 0.0);

// Retrains the inverter on the labeled subset, freezes its aggregate posterior
// on the pool, then (when learn_alpha) aligns alpha to it with every network
// frozen.
PriorRoundResult prior_learning_round(TrainingState& state, const data::Samples& labeled,
                                      const ad::Tensor& unlabeled_pool, const TrainConfig& cfg,
                                      bool learn_alpha);

// Aggregate posterior of h2(h1(g(z(alpha)))) over fixed latent noise, with the
// networks bound as constants.
obj::AggregateFn network_aggregate(const nets::NetworkSet& nets,
                                   const latent::ModeLayout& layout,
                                   const latent::LatentNoise& noise, double slope);

metrics::MetricsReport evaluate(const TrainingState& state, const data::Dataset& dataset,
                                const EvalConfig& eval, std::uint64_t seed);

// Generated samples with the hard latent embedding.
ad::Tensor generate(const TrainingState& state, std::size_t n, std::uint64_t seed);
ad::Tensor generate_conditional(const TrainingState& state, std::size_t mode, std::size_t n,
                                std::uint64_t seed);

struct HistoryRow {
  std::uint64_t step = 0;
  obj::LossBreakdown losses;
  metrics::MetricsReport report;
};

struct TrainingHistory {
  std::vector<HistoryRow> rows;
  std::vector<PriorRoundResult> rounds;
  std::vector<std::uint64_t> round_steps;
  bool stopped_early = false;
};

struct TrainingHooks {
  std::function<void(const HistoryRow&)> on_row;
  // Checked after each evaluation; true ends training.
  std::function<bool(const HistoryRow&, const TrainingState&)> should_stop;
};

// Steps (1-based) after which a prior-learning round runs.
std::vector<std::uint64_t> prior_round_steps(const TrainConfig& cfg);

struct TrainingRun {
  TrainingState state;
  TrainingHistory history;
};

TrainingRun run_training(const TrainConfig& cfg, const ModelConfig& model,
                         const EvalConfig& eval, const data::Dataset& dataset,
                         const TrainingHooks& hooks = {});

std::uint64_t checksum(const latent::AlphaVector& alpha);
std::string variant_name(Variant v);

}  // namespace nemgan::train
