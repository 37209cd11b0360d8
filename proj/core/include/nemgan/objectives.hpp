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

#include <functional>
#include <span>
#include <vector>

#include "nemgan/autodiff.hpp"
#include "nemgan/latent.hpp"

namespace nemgan::obj {

inline constexpr double kProbFloor = 1e-8;

enum class PriorRole { kLatentPrior, kAggregatePosterior, kRetrainedAggregate };

struct PriorVector {
  std::vector<double> probs;
  PriorRole role = PriorRole::kAggregatePosterior;
};

// Floors every entry at kProbFloor and renormalizes.
std::vector<double> smooth(std::span<const double> q);

// sum p_i ln(p_i / q_i) with 0 ln 0 = 0 and q smoothed first.
double kl_divergence(std::span<const double> p, std::span<const double> q);

// Column mean of simplex rows.
PriorVector aggregate_posterior(const ad::Tensor& rows,
                                PriorRole role = PriorRole::kAggregatePosterior);
ad::Var aggregate_posterior(ad::Var rows);

// KL(p || smooth(q)) with p a 1 x M row on the tape and q fixed.
ad::Var kl_on_tape(ad::Var p_row, std::span<const double> q);

// -mean log sigmoid(real) - mean log(1 - sigmoid(fake)), in logit space.
ad::Var discriminator_loss(ad::Var d_real_logits, ad::Var d_fake_logits);
double discriminator_loss(std::span<const double> real_logits,
                          std::span<const double> fake_logits);

struct LossWeights {
  int p = 2;
  double recon = 10.0;
  double kl = 1.0;
  // Per-sample cross-entropy between h2(h1(g(z))) and the latent mode y.
  double mode = 1.0;
  // Cross-entropy on a labeled minibatch inside every joint g/h update
  // (S and P only).
  double cc = 1.0;
  // Literal log(1 - d(g(z))) instead of -log d(g(z)).
  bool saturating = false;
};

struct LossBreakdown {
  double d_loss = 0.0;
  double g_adv_loss = 0.0;
  double recon_loss = 0.0;
  double kl_latent_loss = 0.0;
  double mode_ce_loss = 0.0;
  double cc_loss = 0.0;
  double prior_align_loss = 0.0;
  int p = 2;

  bool all_finite() const;
};

struct GeneratorLoss {
  ad::Var total;
  ad::Var g_adv, recon, kl_latent, mode_ce;
  LossBreakdown parts;
};

// z must not carry a gradient path to alpha; the latent prior enters only as
// a fixed target here.
GeneratorLoss generator_inverter_loss(ad::Var z, ad::Var d_fake_logits, ad::Var zhat,
                                      ad::Var yhat_logits, std::span<const std::size_t> y,
                                      const latent::AlphaVector& alpha,
                                      const LossWeights& weights);

// Mean categorical cross-entropy of softmax(logits) against labels.
ad::Var supervised_cc_loss(ad::Var yhat_logits, std::span<const std::size_t> labels);

using AggregateFn = std::function<ad::Var(ad::Var alpha_row)>;

// KL(P_hat(alpha) || target). target must be detached from any gradient path.
ad::Var prior_alignment_loss(ad::Var alpha_row, ad::Var target, const AggregateFn& current);
ad::Var prior_alignment_loss(ad::Var alpha_row, const PriorVector& target,
                             const AggregateFn& current);

}  // namespace nemgan::obj
