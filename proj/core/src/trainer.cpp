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

#include "nemgan/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace nemgan::train {

namespace {

std::uint64_t derive(std::uint64_t seed, std::uint64_t tag) {
  // splitmix64 finalizer
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ull * (tag + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

std::vector<std::size_t> hidden_chain(std::size_t in, const std::vector<std::size_t>& hidden,
                                      std::size_t out) {
  std::vector<std::size_t> w{in};
  w.insert(w.end(), hidden.begin(), hidden.end());
  w.push_back(out);
  return w;
}

std::vector<ad::Tensor> collect(const nets::BoundNet& net, const ad::Gradients& grads) {
  std::vector<ad::Tensor> out;
  out.reserve(net.params.size());
  for (ad::Var p : net.params) out.push_back(grads[p]);
  return out;
}

void require_finite(double v, std::string_view term) {
  if (!std::isfinite(v)) {
    throw ad::NumericError("training step produced a non-finite " + std::string(term));
  }
}

ad::Tensor sample_rows(const ad::Tensor& x, std::size_t n, std::mt19937_64& rng) {
  std::uniform_int_distribution<std::size_t> pick(0, x.rows() - 1);
  ad::Tensor out = ad::Tensor::matrix(n, x.cols());
  for (std::size_t r = 0; r < n; ++r) {
    const std::size_t src = pick(rng);
    for (std::size_t c = 0; c < x.cols(); ++c) out.at(r, c) = x.at(src, c);
  }
  return out;
}

}  // namespace

void TrainConfig::validate() const {
  if (!(lr_d > 0 && lr_g > 0 && lr_h > 0 && prior.alpha_lr > 0 && prior.alpha_tol >= 0)) {
    throw std::invalid_argument("learning rates must be positive");
  }
  if (!(beta1 >= 0 && beta1 < 1 && beta2 >= 0 && beta2 < 1)) {
    throw std::invalid_argument("Adam betas must lie in [0, 1)");
  }
  if (batch == 0 || steps == 0 || d_steps == 0) {
    throw std::invalid_argument("batch, steps and d_steps must be positive");
  }
  if (!(slope > 0)) throw std::invalid_argument("slope must be positive");
  if (weights.p != 1 && weights.p != 2) throw std::invalid_argument("p must be 1 or 2");
  if (!(weights.recon >= 0 && weights.kl >= 0 && weights.mode >= 0 && weights.cc >= 0)) {
    throw std::invalid_argument("loss weights must be non-negative");
  }
  if (variant != Variant::kV && !(labeled_fraction > 0.0 && labeled_fraction <= 0.05)) {
    throw std::invalid_argument("labeled fraction must lie in (0, 0.05]");
  }
  if (!(prior.warmup_fraction > 0 && prior.period_fraction > 0) || prior.h_epochs == 0 ||
      prior.h_batch == 0 || prior.alpha_steps == 0 || prior.pool_size == 0 ||
      prior.align_samples == 0) {
    throw std::invalid_argument("prior-learning schedule values must be positive");
  }
}

nets::NetworkSpecs ModelConfig::specs(std::size_t latent_dim, std::size_t data_dim,
                                      std::size_t m) const {
  nets::NetworkSpecs s;
  s.g = {hidden_chain(latent_dim, g_hidden, data_dim), activation, nets::OutputKind::kLinear};
  s.d = {hidden_chain(data_dim, d_hidden, 1), activation, nets::OutputKind::kSigmoidLogit};
  s.h1 = {hidden_chain(data_dim, h1_hidden, latent_dim), activation, nets::OutputKind::kLinear};
  s.h2 = {hidden_chain(latent_dim, h2_hidden, m), activation, nets::OutputKind::kSoftmaxLogit};
  return s;
}

AdamState AdamState::like(const std::vector<ad::Tensor>& params) {
  AdamState s;
  for (const ad::Tensor& p : params) {
    s.m.emplace_back(p.shape(), 0.0);
    s.v.emplace_back(p.shape(), 0.0);
  }
  return s;
}

void adam_step(std::vector<ad::Tensor>& params, const std::vector<ad::Tensor>& grads,
               AdamState& state, double lr, double beta1, double beta2, double eps) {
  if (params.size() != grads.size() || params.size() != state.m.size()) {
    throw std::invalid_argument("adam_step: " + std::to_string(params.size()) + " params, " +
                                std::to_string(grads.size()) + " grads, " +
                                std::to_string(state.m.size()) + " moment slots");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].shape() != grads[i].shape() || params[i].shape() != state.m[i].shape()) {
      throw ad::ShapeError("adam_step: parameter " + std::to_string(i) + " has shape " +
                           ad::shape_str(params[i].shape()) + " but gradient " +
                           ad::shape_str(grads[i].shape()));
    }
  }
  ++state.t;
  const double c1 = 1.0 - std::pow(beta1, static_cast<double>(state.t));
  const double c2 = 1.0 - std::pow(beta2, static_cast<double>(state.t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto p = params[i].data();
    auto g = grads[i].data();
    auto m = state.m[i].data();
    auto v = state.v[i].data();
    for (std::size_t k = 0; k < p.size(); ++k) {
      m[k] = beta1 * m[k] + (1.0 - beta1) * g[k];
      v[k] = beta2 * v[k] + (1.0 - beta2) * g[k] * g[k];
      p[k] -= lr * (m[k] / c1) / (std::sqrt(v[k] / c2) + eps);
    }
  }
}

TrainingState init_state(const ModelConfig& model, const TrainConfig& cfg,
                         const data::MixtureSpec& spec) {
  const std::size_t m = model.modes ? model.modes : spec.components();
  TrainingState s;
  s.layout = latent::ModeLayout::one_hot(m, model.center_scale, model.epsilon);
  s.alpha = latent::AlphaVector::uniform(m);
  s.nets = nets::init_networks(model.specs(s.layout.dim, spec.dim, m), derive(cfg.seed, 1));
  s.opt.d = AdamState::like(s.nets.d.params);
  s.opt.g = AdamState::like(s.nets.g.params);
  s.opt.h1 = AdamState::like(s.nets.h1.params);
  s.opt.h2 = AdamState::like(s.nets.h2.params);
  s.rng.seed(derive(cfg.seed, 2));
  return s;
}

obj::LossBreakdown train_step(TrainingState& state, const ad::Tensor& real_batch,
                              const TrainConfig& cfg, const data::Samples* labeled) {
  obj::LossBreakdown out;
  latent::LatentBatch zb;
  for (std::size_t k = 0; k < cfg.d_steps; ++k) {
    zb = latent::assemble(state.alpha, state.layout,
                          latent::draw_noise(state.layout, cfg.batch, state.rng), cfg.slope,
                          latent::Embedding::kSoft);
    const ad::Tensor fake = nets::evaluate(state.nets.g, zb.z);
    ad::Tape tape;
    nets::BoundNet d = nets::bind(tape, state.nets.d, true);
    ad::Var loss = obj::discriminator_loss(nets::d_forward(d, tape.constant(real_batch)),
                                           nets::d_forward(d, tape.constant(fake)));
    out.d_loss = loss.value().item();
    require_finite(out.d_loss, "d_loss");
    const ad::Gradients grads = tape.backward(loss);
    adam_step(state.nets.d.params, collect(d, grads), state.opt.d, cfg.lr_d, cfg.beta1,
              cfg.beta2);
  }

  ad::Tape tape;
  nets::BoundNet g = nets::bind(tape, state.nets.g, true);
  nets::BoundNet d = nets::bind(tape, state.nets.d, false);
  nets::BoundNet h1 = nets::bind(tape, state.nets.h1, true);
  nets::BoundNet h2 = nets::bind(tape, state.nets.h2, true);
  ad::Var z = tape.constant(zb.z);
  ad::Var x = nets::g_forward(g, z);
  ad::Var zhat = nets::h1_forward(h1, x);
  ad::Var logits = nets::h2_forward(h2, zhat);
  obj::GeneratorLoss gl = obj::generator_inverter_loss(z, nets::d_forward(d, x), zhat, logits,
                                                       zb.y, state.alpha, cfg.weights);
  gl.parts.d_loss = out.d_loss;
  out = gl.parts;
  require_finite(out.g_adv_loss, "g_adv");
  require_finite(out.recon_loss, "recon");
  require_finite(out.kl_latent_loss, "kl_latent");
  require_finite(out.mode_ce_loss, "mode_ce");
  ad::Var total = gl.total;
  if (labeled != nullptr && labeled->size() > 0 && cfg.weights.cc > 0.0) {
    std::vector<std::size_t> idx(std::min(cfg.batch, labeled->size()));
    std::uniform_int_distribution<std::size_t> pick(0, labeled->size() - 1);
    for (auto& i : idx) i = pick(state.rng);
    const data::Samples mb = data::rows(*labeled, idx);
    ad::Var cc = obj::supervised_cc_loss(
        nets::h2_forward(h2, nets::h1_forward(h1, tape.constant(mb.x))), mb.labels);
    out.cc_loss = cc.value().item();
    require_finite(out.cc_loss, "cc");
    total = total + cfg.weights.cc * cc;
  }
  const ad::Gradients grads = tape.backward(total);
  adam_step(state.nets.g.params, collect(g, grads), state.opt.g, cfg.lr_g, cfg.beta1, cfg.beta2);
  adam_step(state.nets.h1.params, collect(h1, grads), state.opt.h1, cfg.lr_h, cfg.beta1,
            cfg.beta2);
  adam_step(state.nets.h2.params, collect(h2, grads), state.opt.h2, cfg.lr_h, cfg.beta1,
            cfg.beta2);
  ++state.step;
  return out;
}

std::vector<double> align_alpha(latent::AlphaVector& alpha, const obj::PriorVector& target,
                                const obj::AggregateFn& current, std::size_t steps, double lr,
                                double beta1, double beta2, double tol) {
  std::vector<ad::Tensor> param{alpha.as_row()};
  AdamState st = AdamState::like(param);
  std::vector<double> trajectory;
  trajectory.reserve(steps + 1);
  for (std::size_t s = 0; s <= steps; ++s) {
    ad::Tape tape;
    ad::Var a = tape.leaf(param[0], true);
    ad::Var loss = obj::prior_alignment_loss(a, target, current);
    trajectory.push_back(loss.value().item());
    if (s == steps || trajectory.back() <= tol) break;
    const ad::Gradients grads = tape.backward(loss);
    adam_step(param, {grads[a]}, st, lr, beta1, beta2);
  }
  alpha.set_logits(param[0].vec());
  return trajectory;
}

obj::AggregateFn network_aggregate(const nets::NetworkSet& nets,
                                   const latent::ModeLayout& layout,
                                   const latent::LatentNoise& noise, double slope) {
  return [&nets, &layout, &noise, slope](ad::Var alpha_row) {
    ad::Tape& tape = *alpha_row.tape;
    nets::BoundNet g = nets::bind(tape, nets.g, false);
    nets::BoundNet h1 = nets::bind(tape, nets.h1, false);
    nets::BoundNet h2 = nets::bind(tape, nets.h2, false);
    ad::Var z = latent::latent_on_tape(alpha_row, noise, layout, slope);
    ad::Var logits = nets::h2_forward(h2, nets::h1_forward(h1, nets::g_forward(g, z)));
    return obj::aggregate_posterior(ad::softmax(logits));
  };
}

double fit_inverter(TrainingState& state, const data::Samples& labeled, const TrainConfig& cfg) {
  double last = 0.0;
  const bool train_h1 = cfg.prior.scope == RetrainScope::kBoth;
  AdamState opt_h1 = AdamState::like(state.nets.h1.params);
  AdamState opt_h2 = AdamState::like(state.nets.h2.params);
  std::vector<std::size_t> order(labeled.size());
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t epoch = 0; epoch < cfg.prior.h_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), state.rng);
    double epoch_loss = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.prior.h_batch) {
      const std::size_t end = std::min(order.size(), start + cfg.prior.h_batch);
      std::span<const std::size_t> idx(order.data() + start, end - start);
      const data::Samples mb = data::rows(labeled, idx);
      ad::Tape tape;
      nets::BoundNet h1 = nets::bind(tape, state.nets.h1, train_h1);
      nets::BoundNet h2 = nets::bind(tape, state.nets.h2, true);
      ad::Var loss = obj::supervised_cc_loss(
          nets::h2_forward(h2, nets::h1_forward(h1, tape.constant(mb.x))), mb.labels);
      epoch_loss += loss.value().item();
      ++batches;
      const ad::Gradients grads = tape.backward(loss);
      if (train_h1) {
        adam_step(state.nets.h1.params, collect(h1, grads), opt_h1, cfg.lr_h, cfg.beta1,
                  cfg.beta2);
      }
      adam_step(state.nets.h2.params, collect(h2, grads), opt_h2, cfg.lr_h, cfg.beta1,
                cfg.beta2);
    }
    last = epoch_loss / static_cast<double>(batches);
  }
  return last;
}

PriorRoundResult prior_learning_round(TrainingState& state, const data::Samples& labeled,
                                      const ad::Tensor& unlabeled_pool, const TrainConfig& cfg,
                                      bool learn_alpha) {
  {
    std::vector<std::size_t> seen(labeled.labels);
    std::sort(seen.begin(), seen.end());
    if (std::unique(seen.begin(), seen.end()) - seen.begin() < 2) {
      throw std::invalid_argument(
          "prior_learning_round: labeled subset covers fewer than 2 modes");
    }
  }
  PriorRoundResult result;
  result.alpha_before = state.alpha.logits();

  // Step 1: supervised retraining of the inverter.
  result.cc_loss = fit_inverter(state, labeled, cfg);
  require_finite(result.cc_loss, "cc_loss");

  // Step 2: frozen target from the retrained inverter.
  result.target = obj::aggregate_posterior(nets::posterior(state.nets, unlabeled_pool),
                                           obj::PriorRole::kRetrainedAggregate);

  // Step 3: alpha alone follows the target.
  if (learn_alpha) {
    const std::uint64_t frozen = nets::checksum(state.nets);
    const latent::LatentNoise noise =
        latent::draw_noise(state.layout, cfg.prior.align_samples, state.rng);
    result.kl_trajectory =
        align_alpha(state.alpha, result.target,
                    network_aggregate(state.nets, state.layout, noise, cfg.slope),
                    cfg.prior.alpha_steps, cfg.prior.alpha_lr, cfg.beta1, cfg.beta2,
                    cfg.prior.alpha_tol);
    if (nets::checksum(state.nets) != frozen) {
      throw std::logic_error("network parameters changed during alpha alignment");
    }
  }
  result.alpha_after = state.alpha.logits();
  return result;
}

ad::Tensor generate(const TrainingState& state, std::size_t n, std::uint64_t seed) {
  const latent::LatentBatch zb = latent::sample_latent(
      state.alpha, state.layout, n, latent::kExactStep, seed, latent::Embedding::kHard);
  return nets::evaluate(state.nets.g, zb.z);
}

ad::Tensor generate_conditional(const TrainingState& state, std::size_t mode, std::size_t n,
                                std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const latent::LatentBatch zb = latent::sample_conditional(state.layout, mode, n, rng);
  return nets::evaluate(state.nets.g, zb.z);
}

metrics::MetricsReport evaluate(const TrainingState& state, const data::Dataset& dataset,
                                const EvalConfig& eval, std::uint64_t seed) {
  metrics::MetricsReport report;
  report.step = state.step;
  if (eval.clustering) {
    const std::vector<std::size_t> pred =
        metrics::argmax_rows(nets::posterior(state.nets, dataset.balanced_test.x));
    report.acc = metrics::clustering_accuracy(dataset.balanced_test.labels, pred);
    report.nmi = metrics::nmi(dataset.balanced_test.labels, pred);
    report.ari = metrics::ari(dataset.balanced_test.labels, pred);
  }
  if (eval.coverage || eval.frechet) {
    const ad::Tensor fake = generate(state, eval.n, seed);
    if (eval.coverage) {
      const metrics::Coverage cov =
          metrics::mode_coverage(fake, dataset.spec, dataset.spec.weights);
      report.modes_covered = cov.modes_covered;
      report.histogram_kl = cov.histogram_kl;
    }
    if (eval.frechet) report.frechet = metrics::frechet_gaussian(dataset.test.x, fake);
  }
  return report;
}

std::vector<std::uint64_t> prior_round_steps(const TrainConfig& cfg) {
  const double total = static_cast<double>(cfg.steps);
  const auto warmup = static_cast<std::uint64_t>(std::ceil(cfg.prior.warmup_fraction * total));
  const auto period = std::max<std::uint64_t>(
      1, static_cast<std::uint64_t>(std::llround(cfg.prior.period_fraction * total)));
  std::vector<std::uint64_t> out;
  for (std::uint64_t s = std::max<std::uint64_t>(warmup, 1); s <= cfg.steps; s += period) {
    out.push_back(s);
  }
  return out;
}

TrainingRun run_training(const TrainConfig& cfg, const ModelConfig& model,
                         const EvalConfig& eval, const data::Dataset& dataset,
                         const TrainingHooks& hooks) {
  cfg.validate();
  if (eval.interval == 0 || eval.n == 0) {
    throw std::invalid_argument("eval interval and n must be positive");
  }
  TrainingRun run{init_state(model, cfg, dataset.spec), {}};
  TrainingState& state = run.state;

  data::Samples labeled;
  std::vector<std::uint64_t> rounds;
  ad::Tensor pool;
  if (cfg.variant != Variant::kV) {
    const data::LabeledSubset subset =
        data::draw_supervised_subset(dataset.train.labels, cfg.labeled_fraction,
                                     derive(cfg.seed, 3));
    labeled = data::rows(dataset.train, subset.indices);
    std::mt19937_64 pool_rng(derive(cfg.seed, 4));
    pool = sample_rows(dataset.train.x, std::min(cfg.prior.pool_size, dataset.train.size()),
                       pool_rng);
    rounds = prior_round_steps(cfg);
    // anchor the inverter's classes to the labels before g picks a layout
    fit_inverter(state, labeled, cfg);
  }

  double last_align = 0.0;
  std::size_t next_round = 0;
  for (std::uint64_t step = 1; step <= cfg.steps; ++step) {
    const ad::Tensor real = sample_rows(dataset.train.x, cfg.batch, state.rng);
    const std::uint64_t alpha_sum = checksum(state.alpha);
    obj::LossBreakdown losses =
        train_step(state, real, cfg, cfg.variant == Variant::kV ? nullptr : &labeled);
    if (checksum(state.alpha) != alpha_sum) {
      throw std::logic_error("alpha changed outside a prior-learning round");
    }
    if (next_round < rounds.size() && rounds[next_round] == step) {
      PriorRoundResult r =
          prior_learning_round(state, labeled, pool, cfg, cfg.variant == Variant::kP);
      if (!r.kl_trajectory.empty()) last_align = r.kl_trajectory.back();
      run.history.rounds.push_back(std::move(r));
      run.history.round_steps.push_back(step);
      ++next_round;
    }
    losses.prior_align_loss = last_align;

    if (step % eval.interval == 0 || step == cfg.steps) {
      HistoryRow row{step, losses, evaluate(state, dataset, eval, derive(cfg.seed, 1000 + step))};
      run.history.rows.push_back(row);
      if (hooks.on_row) hooks.on_row(row);
      if (hooks.should_stop && hooks.should_stop(row, state)) {
        run.history.stopped_early = step < cfg.steps;
        break;
      }
    }
  }
  return run;
}

std::uint64_t checksum(const latent::AlphaVector& alpha) {
  nets::Mlp wrap{"alpha", {}, {alpha.as_row()}};
  return nets::checksum(wrap);
}

std::string variant_name(Variant v) {
  switch (v) {
    case Variant::kV: return "V";
    case Variant::kS: return "S";
    case Variant::kP: return "P";
  }
  return "?";
}

}  // namespace nemgan::train
