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

#include <cstddef>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <vector>

#include "nemgan/autodiff.hpp"

namespace nemgan::latent {

// Learnable logits of the latent mode prior.
class AlphaVector {
 public:
  explicit AlphaVector(std::vector<double> logits, bool trainable = true);
  static AlphaVector uniform(std::size_t modes) {
    return AlphaVector(std::vector<double>(modes, 0.0));
  }

  std::size_t modes() const { return logits_.size(); }
  const std::vector<double>& logits() const { return logits_; }
  void set_logits(std::vector<double> logits);
  bool trainable() const { return trainable_; }
  void set_trainable(bool t) { trainable_ = t; }

  ad::Tensor as_row() const { return ad::Tensor::row(logits_); }

 private:
  std::vector<double> logits_;
  bool trainable_ = true;
};

// Placement of the M discrete modes in latent space. Mode i occupies the
// open infinity-norm box of half-width epsilon around centers row i.
struct ModeLayout {
  std::size_t modes = 0;
  std::size_t dim = 0;
  ad::Tensor centers;  // modes x dim
  double epsilon = 0.0;

  // centers = scale * e_i in R^modes
  static ModeLayout one_hot(std::size_t modes, double scale = 2.0, double epsilon = 0.3);

  // Throws std::invalid_argument when two boxes overlap.
  void validate() const;
  double min_center_distance() const;
  // Index of the box containing z, or modes when z lies in none.
  std::size_t locate(std::span<const double> z) const;
};

enum class Embedding {
  kSoft,  // z = sum_i f_i c_i + nu2, differentiable in alpha
  kHard,  // z = c_y + nu2
};

struct LatentBatch {
  std::vector<double> nu1;
  ad::Tensor f;    // n x M, rows normalized to sum 1
  std::vector<std::size_t> y;
  ad::Tensor nu2;  // n x dim
  ad::Tensor z;    // n x dim
  std::size_t size() const { return nu1.size(); }
};

// Parameter-free noise for one batch.
struct LatentNoise {
  std::vector<double> nu1;  // in (0, 1)
  ad::Tensor nu2;           // n x dim, entries in [-eps, eps]
};

inline constexpr double kExactStep = std::numeric_limits<double>::infinity();

// Cumulative softmax of alpha; a[M-1] == 1.
std::vector<double> breakpoints(const AlphaVector& alpha);
std::vector<double> prior_probs(const AlphaVector& alpha);

// Unit-step surrogate clamp(slope*t + 0.5, 0, 1); an infinite slope gives
// the exact step with step(0) = 1.
double hard_step(double t, double slope);

// Telescoping indicator f_0 = hs(a_0 - nu1), f_i = hs(a_i - nu1) - hs(a_{i-1} - nu1).
std::vector<double> soft_indicator(const AlphaVector& alpha, double nu1, double slope);
std::size_t sample_mode(const AlphaVector& alpha, double nu1, double slope);

LatentNoise draw_noise(const ModeLayout& layout, std::size_t n, std::mt19937_64& rng);

// Builds the latent graph on alpha's tape. Returns z (n x dim); when f_out is
// given it receives the normalized indicator rows.
ad::Var latent_on_tape(ad::Var alpha_row, const LatentNoise& noise, const ModeLayout& layout,
                       double slope, ad::Var* f_out = nullptr);
// The raw (unnormalized) indicator rows on a tape, n x M.
ad::Var soft_indicator_on_tape(ad::Var alpha_row, std::span<const double> nu1, double slope);

LatentBatch assemble(const AlphaVector& alpha, const ModeLayout& layout, LatentNoise noise,
                     double slope, Embedding embedding);

LatentBatch sample_latent(const AlphaVector& alpha, const ModeLayout& layout, std::size_t n,
                          double slope, std::uint64_t seed,
                          Embedding embedding = Embedding::kSoft);

// z = c_mode + nu2 for every row.
LatentBatch sample_conditional(const ModeLayout& layout, std::size_t mode, std::size_t n,
                               std::mt19937_64& rng);

}  // namespace nemgan::latent
