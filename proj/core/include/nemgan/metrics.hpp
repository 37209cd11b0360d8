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
#include <optional>
#include <span>
#include <vector>

#include "nemgan/autodiff.hpp"
#include "nemgan/data.hpp"

namespace nemgan::metrics {

struct ContingencyTable {
  std::size_t k_true = 0;
  std::size_t k_pred = 0;
  std::vector<std::size_t> counts;  // k_true x k_pred, row-major
  std::size_t total = 0;

  std::size_t at(std::size_t t, std::size_t p) const { return counts[t * k_pred + p]; }
};

// Table sizes grow to at least min_true x min_pred.
ContingencyTable contingency(std::span<const std::size_t> true_labels,
                             std::span<const std::size_t> pred_labels, std::size_t min_true = 0,
                             std::size_t min_pred = 0);

// Minimum-cost perfect assignment on a square cost matrix (row-major n x n).
// Returns the column assigned to each row.
std::vector<std::size_t> solve_assignment(std::span<const double> cost, std::size_t n);

inline constexpr std::size_t kUnmatched = static_cast<std::size_t>(-1);

// For each predicted cluster, the true class it is matched to (or kUnmatched)
// under the accuracy-maximizing injective mapping.
std::vector<std::size_t> best_matching(const ContingencyTable& table);

double clustering_accuracy(std::span<const std::size_t> true_labels,
                           std::span<const std::size_t> pred_labels);
double nmi(std::span<const std::size_t> true_labels, std::span<const std::size_t> pred_labels);
double ari(std::span<const std::size_t> true_labels, std::span<const std::size_t> pred_labels);

struct Coverage {
  std::size_t modes_covered = 0;
  double histogram_kl = 0.0;
  std::vector<std::size_t> counts;
  std::size_t threshold = 0;
};

// A mode is covered once it collects at least min_count samples; the default
// threshold is max(1, 0.2 * n / K).
Coverage mode_coverage(const ad::Tensor& generated, const data::MixtureSpec& spec,
                       std::span<const double> target_prior,
                       std::optional<std::size_t> min_count = std::nullopt);

// Squared 2-Wasserstein distance between Gaussian fits of two sample sets.
double frechet_gaussian(const ad::Tensor& real, const ad::Tensor& generated);
// Same distance from moments; covariances are dim x dim row-major.
double frechet_from_moments(std::span<const double> mu1, std::span<const double> cov1,
                            std::span<const double> mu2, std::span<const double> cov2,
                            std::size_t dim);
// tr((A B)^{1/2}) for symmetric PSD A, B via the eigen route.
double trace_sqrt_product(std::span<const double> a, std::span<const double> b, std::size_t dim);

struct MetricsReport {
  std::size_t step = 0;
  double acc = 0.0;
  double nmi = 0.0;
  double ari = 0.0;
  std::size_t modes_covered = 0;
  double histogram_kl = 0.0;
  double frechet = 0.0;
};

// Compares KL(aggregate posterior || prior) with KL(oracle histogram || prior)
// on generated samples. The oracle histogram is carried into latent index
// space through the accuracy-maximizing matching.
struct PosteriorConsistency {
  double inverter_acc = 0.0;
  double kl_posterior = 0.0;
  double kl_oracle = 0.0;
  double gap() const;
};

PosteriorConsistency posterior_consistency(const ad::Tensor& posterior_rows,
                                           std::span<const std::size_t> oracle_labels,
                                           std::span<const double> prior);

std::vector<std::size_t> argmax_rows(const ad::Tensor& rows);

}  // namespace nemgan::metrics
