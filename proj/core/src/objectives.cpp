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

#include "nemgan/objectives.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace nemgan::obj {

namespace {

double softplus(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

void require_row(ad::Var v, std::string_view what) {
  if (v.value().rows() != 1) {
    throw ad::ShapeError(std::string(what) + " must be a single row, got " +
                         ad::shape_str(v.value().shape()));
  }
}

}  // namespace

std::vector<double> smooth(std::span<const double> q) {
  std::vector<double> out(q.begin(), q.end());
  double s = 0.0;
  for (double& v : out) {
    v = std::max(v, kProbFloor);
    s += v;
  }
  for (double& v : out) v /= s;
  return out;
}

double kl_divergence(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) {
    throw std::invalid_argument("kl_divergence: length mismatch " + std::to_string(p.size()) +
                                " vs " + std::to_string(q.size()));
  }
  const std::vector<double> qs = smooth(q);
  double kl = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] > 0.0) kl += p[i] * std::log(p[i] / qs[i]);
  }
  return kl;
}

PriorVector aggregate_posterior(const ad::Tensor& rows, PriorRole role) {
  if (rows.size() == 0) throw std::invalid_argument("aggregate_posterior: empty batch");
  const std::size_t n = rows.rows(), m = rows.cols();
  PriorVector out{std::vector<double>(m, 0.0), role};
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t i = 0; i < m; ++i) out.probs[i] += rows.at(r, i);
  }
  for (double& v : out.probs) v /= static_cast<double>(n);
  return out;
}

ad::Var aggregate_posterior(ad::Var rows) {
  const std::size_t n = rows.value().rows();
  ad::Tensor w = ad::Tensor::matrix(1, n, 1.0 / static_cast<double>(n));
  return ad::matmul(rows.tape->constant(std::move(w)), rows);
}

ad::Var kl_on_tape(ad::Var p_row, std::span<const double> q) {
  require_row(p_row, "kl_on_tape: p");
  if (p_row.value().cols() != q.size()) {
    throw std::invalid_argument("kl_on_tape: length mismatch " +
                                std::to_string(p_row.value().cols()) + " vs " +
                                std::to_string(q.size()));
  }
  std::vector<double> log_q = smooth(q);
  for (double& v : log_q) v = std::log(v);
  ad::Tape& tape = *p_row.tape;
  // p is a mean of softmax rows, hence positive; the clamp only guards underflow.
  ad::Var log_p = ad::log(ad::clamp(p_row, 1e-300, 2.0));
  ad::Var diff = ad::sub(log_p, tape.constant(ad::Tensor::row(std::move(log_q))));
  return ad::sum(ad::mul(p_row, diff));
}

ad::Var discriminator_loss(ad::Var d_real_logits, ad::Var d_fake_logits) {
  const ad::Tensor ones(d_real_logits.value().shape(), 1.0);
  const ad::Tensor zeros(d_fake_logits.value().shape(), 0.0);
  return ad::add(ad::bce_with_logits(d_real_logits, ones),
                 ad::bce_with_logits(d_fake_logits, zeros));
}

double discriminator_loss(std::span<const double> real_logits,
                          std::span<const double> fake_logits) {
  if (real_logits.empty() || fake_logits.empty()) {
    throw std::invalid_argument("discriminator_loss: empty batch");
  }
  double r = 0.0, f = 0.0;
  for (double x : real_logits) r += softplus(-x);
  for (double x : fake_logits) f += softplus(x);
  return r / static_cast<double>(real_logits.size()) +
         f / static_cast<double>(fake_logits.size());
}

bool LossBreakdown::all_finite() const {
  for (double v : {d_loss, g_adv_loss, recon_loss, kl_latent_loss, mode_ce_loss, cc_loss,
                   prior_align_loss}) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

GeneratorLoss generator_inverter_loss(ad::Var z, ad::Var d_fake_logits, ad::Var zhat,
                                      ad::Var yhat_logits, std::span<const std::size_t> y,
                                      const latent::AlphaVector& alpha,
                                      const LossWeights& weights) {
  if (weights.p != 1 && weights.p != 2) {
    throw std::invalid_argument("generator_inverter_loss: p must be 1 or 2, got " +
                                std::to_string(weights.p));
  }
  if (z.value().shape() != zhat.value().shape()) {
    throw ad::ShapeError("generator_inverter_loss: z " + ad::shape_str(z.value().shape()) +
                         " vs zhat " + ad::shape_str(zhat.value().shape()));
  }
  if (yhat_logits.value().cols() != alpha.modes()) {
    throw ad::ShapeError("generator_inverter_loss: posterior has " +
                         std::to_string(yhat_logits.value().cols()) + " columns, alpha has " +
                         std::to_string(alpha.modes()) + " modes");
  }
  if (z.tape->requires_grad(z)) {
    throw std::invalid_argument(
        "generator_inverter_loss: z must be detached from alpha in the GAN phase");
  }
  GeneratorLoss out;
  const ad::Tensor fake_target(d_fake_logits.value().shape(),
                               weights.saturating ? 0.0 : 1.0);
  out.g_adv = ad::bce_with_logits(d_fake_logits, fake_target);
  if (weights.saturating) out.g_adv = ad::scale(out.g_adv, -1.0);

  out.recon = ad::mean(ad::row_pnorm(ad::sub(z, zhat), weights.p));

  const std::vector<double> prior = latent::prior_probs(alpha);
  out.kl_latent = kl_on_tape(aggregate_posterior(ad::softmax(yhat_logits)), prior);

  out.mode_ce = ad::cross_entropy_with_logits(yhat_logits, y);

  out.total = ad::add(ad::add(out.g_adv, ad::scale(out.recon, weights.recon)),
                      ad::add(ad::scale(out.kl_latent, weights.kl),
                              ad::scale(out.mode_ce, weights.mode)));

  out.parts.g_adv_loss = out.g_adv.value().item();
  out.parts.recon_loss = out.recon.value().item();
  out.parts.kl_latent_loss = out.kl_latent.value().item();
  out.parts.mode_ce_loss = out.mode_ce.value().item();
  out.parts.p = weights.p;
  return out;
}

ad::Var supervised_cc_loss(ad::Var yhat_logits, std::span<const std::size_t> labels) {
  return ad::cross_entropy_with_logits(yhat_logits, labels);
}

ad::Var prior_alignment_loss(ad::Var alpha_row, ad::Var target, const AggregateFn& current) {
  if (target.tape->requires_grad(target)) {
    throw std::invalid_argument(
        "prior_alignment_loss: target must be detached from the gradient graph");
  }
  require_row(target, "prior_alignment_loss: target");
  ad::Var p = current(alpha_row);
  require_row(p, "prior_alignment_loss: aggregate");
  return kl_on_tape(p, target.value().data());
}

ad::Var prior_alignment_loss(ad::Var alpha_row, const PriorVector& target,
                             const AggregateFn& current) {
  return prior_alignment_loss(alpha_row,
                              alpha_row.tape->constant(ad::Tensor::row(target.probs)), current);
}

}  // namespace nemgan::obj
