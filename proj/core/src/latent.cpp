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

#include "nemgan/latent.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace nemgan::latent {

namespace {

double open_unit(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double v;
  do {
    v = u(rng);
  } while (v <= 0.0);
  return v;
}

std::size_t argmax_lowest(std::span<const double> v) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i) {
    if (v[i] > v[best]) best = i;
  }
  return best;
}

}  // namespace

AlphaVector::AlphaVector(std::vector<double> logits, bool trainable) : trainable_(trainable) {
  set_logits(std::move(logits));
}

void AlphaVector::set_logits(std::vector<double> logits) {
  if (logits.size() < 2) {
    throw std::invalid_argument("alpha needs at least 2 modes, got " +
                                std::to_string(logits.size()));
  }
  for (double v : logits) {
    if (!std::isfinite(v)) throw std::invalid_argument("alpha logits must be finite");
  }
  logits_ = std::move(logits);
}

ModeLayout ModeLayout::one_hot(std::size_t modes, double scale, double epsilon) {
  ModeLayout layout;
  layout.modes = modes;
  layout.dim = modes;
  layout.epsilon = epsilon;
  layout.centers = ad::Tensor::matrix(modes, modes);
  for (std::size_t i = 0; i < modes; ++i) layout.centers.at(i, i) = scale;
  layout.validate();
  return layout;
}

double ModeLayout::min_center_distance() const {
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < modes; ++i) {
    for (std::size_t j = i + 1; j < modes; ++j) {
      double d = 0.0;
      for (std::size_t k = 0; k < dim; ++k) {
        d = std::max(d, std::abs(centers.at(i, k) - centers.at(j, k)));
      }
      best = std::min(best, d);
    }
  }
  return best;
}

void ModeLayout::validate() const {
  if (modes < 2 || dim < 1) {
    throw std::invalid_argument("mode layout needs >= 2 modes and dim >= 1");
  }
  if (centers.rows() != modes || centers.cols() != dim) {
    throw std::invalid_argument("mode layout centers must be " + std::to_string(modes) + "x" +
                                std::to_string(dim) + ", got " +
                                ad::shape_str(centers.shape()));
  }
  if (!(epsilon >= 0.0) || !std::isfinite(epsilon)) {
    throw std::invalid_argument("mode layout epsilon must be finite and non-negative");
  }
  const double sep = min_center_distance();
  if (!(sep > 2.0 * epsilon)) {
    throw std::invalid_argument("mode layout boxes overlap: min center distance " +
                                std::to_string(sep) + " <= 2*epsilon = " +
                                std::to_string(2.0 * epsilon));
  }
}

std::size_t ModeLayout::locate(std::span<const double> z) const {
  for (std::size_t i = 0; i < modes; ++i) {
    bool inside = true;
    for (std::size_t k = 0; k < dim && inside; ++k) {
      inside = std::abs(z[k] - centers.at(i, k)) <= epsilon;
    }
    if (inside) return i;
  }
  return modes;
}

std::vector<double> prior_probs(const AlphaVector& alpha) {
  return ad::softmax_rows(alpha.as_row()).vec();
}

std::vector<double> breakpoints(const AlphaVector& alpha) {
  std::vector<double> a = prior_probs(alpha);
  for (std::size_t i = 1; i < a.size(); ++i) a[i] += a[i - 1];
  return a;
}

double hard_step(double t, double slope) {
  if (std::isinf(slope)) return t >= 0.0 ? 1.0 : 0.0;
  return std::clamp(slope * t + 0.5, 0.0, 1.0);
}

std::vector<double> soft_indicator(const AlphaVector& alpha, double nu1, double slope) {
  if (!(slope > 0.0)) throw std::invalid_argument("soft_indicator: slope must be positive");
  if (!(nu1 > 0.0 && nu1 < 1.0)) {
    throw std::invalid_argument("soft_indicator: nu1 must lie in (0, 1)");
  }
  const std::vector<double> a = breakpoints(alpha);
  std::vector<double> f(a.size());
  double prev = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double h = hard_step(a[i] - nu1, slope);
    f[i] = h - prev;
    prev = h;
  }
  return f;
}

std::size_t sample_mode(const AlphaVector& alpha, double nu1, double slope) {
  return argmax_lowest(soft_indicator(alpha, nu1, slope));
}

LatentNoise draw_noise(const ModeLayout& layout, std::size_t n, std::mt19937_64& rng) {
  LatentNoise noise;
  noise.nu1.resize(n);
  noise.nu2 = ad::Tensor::matrix(n, layout.dim);
  std::uniform_real_distribution<double> jitter(-layout.epsilon, layout.epsilon);
  for (std::size_t r = 0; r < n; ++r) {
    noise.nu1[r] = open_unit(rng);
    for (std::size_t k = 0; k < layout.dim; ++k) {
      noise.nu2.at(r, k) = layout.epsilon > 0.0 ? jitter(rng) : 0.0;
    }
  }
  return noise;
}

ad::Var soft_indicator_on_tape(ad::Var alpha_row, std::span<const double> nu1, double slope) {
  if (!(slope > 0.0) || std::isinf(slope)) {
    throw std::invalid_argument("soft_indicator_on_tape: slope must be positive and finite");
  }
  ad::Tape& tape = *alpha_row.tape;
  const std::size_t m = alpha_row.value().cols();
  const std::size_t n = nu1.size();

  // a = softmax(alpha) * U with U upper-triangular ones gives the cumulative sums.
  ad::Tensor upper = ad::Tensor::matrix(m, m);
  for (std::size_t j = 0; j < m; ++j) {
    for (std::size_t i = j; i < m; ++i) upper.at(j, i) = 1.0;
  }
  ad::Var a = ad::matmul(ad::softmax(alpha_row), tape.constant(std::move(upper)));
  ad::Var a_rows = ad::matmul(tape.constant(ad::Tensor::matrix(n, 1, 1.0)), a);

  ad::Tensor nu = ad::Tensor::matrix(n, m);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t i = 0; i < m; ++i) nu.at(r, i) = nu1[r];
  }
  ad::Var steps = ad::hard_sigmoid(ad::sub(a_rows, tape.constant(std::move(nu))), slope);

  // f_i = H_i - H_{i-1}
  ad::Tensor diff = ad::Tensor::matrix(m, m);
  for (std::size_t i = 0; i < m; ++i) {
    diff.at(i, i) = 1.0;
    if (i + 1 < m) diff.at(i, i + 1) = -1.0;
  }
  return ad::matmul(steps, tape.constant(std::move(diff)));
}

ad::Var latent_on_tape(ad::Var alpha_row, const LatentNoise& noise, const ModeLayout& layout,
                       double slope, ad::Var* f_out) {
  ad::Tape& tape = *alpha_row.tape;
  if (alpha_row.value().cols() != layout.modes) {
    throw ad::ShapeError("latent_on_tape: alpha has " +
                         std::to_string(alpha_row.value().cols()) + " modes, layout has " +
                         std::to_string(layout.modes));
  }
  ad::Var raw = soft_indicator_on_tape(alpha_row, noise.nu1, slope);
  // Row sums equal hs(a_{M-1} - nu1) = hs(1 - nu1), which carries no
  // dependence on alpha, so normalizing by a constant keeps the gradient exact.
  const ad::Tensor& rv = raw.value();
  ad::Tensor inv(rv.shape());
  for (std::size_t r = 0; r < rv.rows(); ++r) {
    double s = 0.0;
    for (std::size_t i = 0; i < rv.cols(); ++i) s += rv.at(r, i);
    for (std::size_t i = 0; i < rv.cols(); ++i) inv.at(r, i) = 1.0 / s;
  }
  ad::Var f = ad::mul(raw, tape.constant(std::move(inv)));
  if (f_out) *f_out = f;
  return ad::add(ad::matmul(f, tape.constant(layout.centers)), tape.constant(noise.nu2));
}

LatentBatch assemble(const AlphaVector& alpha, const ModeLayout& layout, LatentNoise noise,
                     double slope, Embedding embedding) {
  if (alpha.modes() != layout.modes) {
    throw std::invalid_argument("alpha has " + std::to_string(alpha.modes()) +
                                " modes but layout has " + std::to_string(layout.modes));
  }
  const std::size_t n = noise.nu1.size();
  const std::size_t m = layout.modes;
  LatentBatch batch;
  batch.f = ad::Tensor::matrix(n, m);
  batch.z = ad::Tensor::matrix(n, layout.dim);
  batch.y.resize(n);
  for (std::size_t r = 0; r < n; ++r) {
    std::vector<double> f = soft_indicator(alpha, noise.nu1[r], slope);
    double s = 0.0;
    for (double v : f) s += v;
    for (double& v : f) v /= s;
    batch.y[r] = argmax_lowest(f);
    for (std::size_t i = 0; i < m; ++i) batch.f.at(r, i) = f[i];
    for (std::size_t k = 0; k < layout.dim; ++k) {
      double zk = noise.nu2.at(r, k);
      if (embedding == Embedding::kHard) {
        zk += layout.centers.at(batch.y[r], k);
      } else {
        for (std::size_t i = 0; i < m; ++i) zk += f[i] * layout.centers.at(i, k);
      }
      batch.z.at(r, k) = zk;
    }
  }
  batch.nu1 = std::move(noise.nu1);
  batch.nu2 = std::move(noise.nu2);
  return batch;
}

LatentBatch sample_latent(const AlphaVector& alpha, const ModeLayout& layout, std::size_t n,
                          double slope, std::uint64_t seed, Embedding embedding) {
  layout.validate();
  std::mt19937_64 rng(seed);
  return assemble(alpha, layout, draw_noise(layout, n, rng), slope, embedding);
}

LatentBatch sample_conditional(const ModeLayout& layout, std::size_t mode, std::size_t n,
                               std::mt19937_64& rng) {
  if (mode >= layout.modes) {
    throw std::out_of_range("mode index " + std::to_string(mode) + " outside [0, " +
                            std::to_string(layout.modes) + ")");
  }
  LatentNoise noise = draw_noise(layout, n, rng);
  LatentBatch batch;
  batch.f = ad::Tensor::matrix(n, layout.modes);
  batch.z = noise.nu2;
  batch.y.assign(n, mode);
  for (std::size_t r = 0; r < n; ++r) {
    batch.f.at(r, mode) = 1.0;
    for (std::size_t k = 0; k < layout.dim; ++k) batch.z.at(r, k) += layout.centers.at(mode, k);
  }
  batch.nu1 = std::move(noise.nu1);
  batch.nu2 = std::move(noise.nu2);
  return batch;
}

}  // namespace nemgan::latent
