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
#include <random>
#include <span>
#include <vector>

#include "nemgan/autodiff.hpp"

namespace nemgan::data {

// Isotropic Gaussian mixture with known components.
struct MixtureSpec {
  std::size_t dim = 0;
  ad::Tensor means;  // K x dim
  std::vector<double> stds;
  std::vector<double> weights;

  std::size_t components() const { return weights.size(); }
  void validate() const;
};

MixtureSpec make_ring(std::size_t k = 8, double radius = 2.0, double std = 0.05);
MixtureSpec make_grid(std::size_t m = 5, double spacing = 2.0, double std = 0.05);
MixtureSpec make_skewed(MixtureSpec base, std::vector<double> weights);
// Each factor is a ring of `levels` points in its own 2-D block; component
// index is the mixed-radix number of the per-factor levels (factor 0 fastest).
MixtureSpec make_factored(std::size_t factors, std::size_t levels, double radius = 2.0,
                          double std = 0.05);

struct Samples {
  ad::Tensor x;  // n x dim
  std::vector<std::size_t> labels;
  std::size_t size() const { return labels.size(); }
};

Samples sample_mixture(const MixtureSpec& spec, std::size_t n, std::uint64_t seed);
Samples sample_component(const MixtureSpec& spec, std::size_t component, std::size_t n,
                         std::mt19937_64& rng);

struct LabeledSubset {
  std::vector<std::size_t> indices;
  std::vector<std::size_t> labels;
  double fraction = 0.0;
};

// Indices refer to `labels`. At least one example per non-empty mode when the
// draw is large enough, otherwise a uniform draw.
LabeledSubset draw_supervised_subset(std::span<const std::size_t> labels, double fraction,
                                     std::uint64_t seed);

// Maximum-likelihood component per row; ties go to the lower index.
std::vector<std::size_t> oracle_mode_assign(const ad::Tensor& x, const MixtureSpec& spec);

struct Dataset {
  MixtureSpec spec;
  Samples train;
  Samples test;
  Samples balanced_test;
};

// 80/20 train/test split; the balanced test set holds per_mode draws of every
// component, resampled from the test split.
Dataset make_dataset(const MixtureSpec& spec, std::size_t n, std::size_t per_mode,
                     std::uint64_t seed);
Samples balanced_resample(const MixtureSpec& spec, const Samples& pool, std::size_t per_mode,
                          std::uint64_t seed);

Samples rows(const Samples& s, std::span<const std::size_t> indices);

void write_csv(const std::filesystem::path& path, const Samples& samples);
Samples read_csv(const std::filesystem::path& path);

}  // namespace nemgan::data
