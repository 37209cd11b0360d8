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

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "nemgan/data.hpp"
#include "nemgan/metrics.hpp"

namespace ad = nemgan::ad;
namespace data = nemgan::data;
namespace metrics = nemgan::metrics;

namespace {

double brute_accuracy(const std::vector<std::size_t>& t, const std::vector<std::size_t>& p,
                      std::size_t k) {
  std::vector<std::size_t> perm(k);
  std::iota(perm.begin(), perm.end(), 0);
  std::size_t best = 0;
  do {
    std::size_t hits = 0;
    for (std::size_t i = 0; i < t.size(); ++i) hits += perm[p[i]] == t[i];
    best = std::max(best, hits);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return static_cast<double>(best) / static_cast<double>(t.size());
}

}  // namespace

TEST(Accuracy, PermutationInvariant) {
  const std::vector<std::size_t> t = {0, 0, 1, 1, 2, 2, 3};
  const std::vector<std::size_t> p = {2, 2, 0, 0, 3, 3, 1};
  EXPECT_DOUBLE_EQ(metrics::clustering_accuracy(t, p), 1.0);
}

TEST(Accuracy, ConstantPrediction) {
  std::vector<std::size_t> t;
  for (std::size_t k = 0; k < 5; ++k) t.insert(t.end(), 20, k);
  const std::vector<std::size_t> p(t.size(), 3);
  EXPECT_DOUBLE_EQ(metrics::clustering_accuracy(t, p), 0.2);
}

TEST(Accuracy, EmptyRejected) {
  const std::vector<std::size_t> e;
  EXPECT_THROW(metrics::clustering_accuracy(e, e), std::invalid_argument);
  const std::vector<std::size_t> a = {0, 1}, b = {0};
  EXPECT_THROW(metrics::clustering_accuracy(a, b), std::invalid_argument);
}

TEST(Accuracy, MatchesExhaustiveSearchOnSixBySix) {
  std::mt19937_64 rng(6);
  std::uniform_int_distribution<std::size_t> lab(0, 5);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<std::size_t> t(120), p(120);
    for (std::size_t i = 0; i < 120; ++i) {
      t[i] = lab(rng);
      p[i] = lab(rng) < 3 ? t[i] : lab(rng);
    }
    EXPECT_NEAR(metrics::clustering_accuracy(t, p), brute_accuracy(t, p, 6), 1e-12);
  }
}

TEST(Assignment, Rectangular) {
  // 2 true classes, 3 predicted clusters: one cluster stays unmatched
  const std::vector<std::size_t> t = {0, 0, 0, 1, 1, 1};
  const std::vector<std::size_t> p = {0, 0, 2, 1, 1, 2};
  EXPECT_NEAR(metrics::clustering_accuracy(t, p), 4.0 / 6.0, 1e-12);
  const auto table = metrics::contingency(t, p);
  const auto match = metrics::best_matching(table);
  EXPECT_EQ(std::count(match.begin(), match.end(), metrics::kUnmatched), 1);
}

TEST(Nmi, PerfectAndDegenerate) {
  const std::vector<std::size_t> t = {0, 0, 1, 1, 2, 2};
  const std::vector<std::size_t> p = {1, 1, 2, 2, 0, 0};
  EXPECT_NEAR(metrics::nmi(t, p), 1.0, 1e-12);
  EXPECT_NEAR(metrics::ari(t, p), 1.0, 1e-12);
  const std::vector<std::size_t> c(6, 0);
  EXPECT_EQ(metrics::nmi(t, c), 0.0);
  EXPECT_NEAR(metrics::ari(t, c), 0.0, 1e-12);
}

TEST(Nmi, HandCase) {
  const std::vector<std::size_t> t = {0, 0, 1, 1}, p = {0, 1, 1, 1};
  // entropies and mutual information written out by hand
  const double ht = std::log(2.0);
  const double hp = -(0.25 * std::log(0.25) + 0.75 * std::log(0.75));
  const double mi = 0.25 * std::log(0.25 / (0.5 * 0.25)) + 0.25 * std::log(0.25 / (0.5 * 0.75)) +
                    0.5 * std::log(0.5 / (0.5 * 0.75));
  EXPECT_NEAR(metrics::nmi(t, p), mi / std::sqrt(ht * hp), 1e-12);
  // pairs: (0,1) same/diff, (0,2) diff/diff, (0,3) diff/diff, (1,2) diff/same,
  // (1,3) diff/same, (2,3) same/same. ARI from the pair counts:
  const double index = 1, sum_t = 2, sum_p = 3, pairs = 6;
  const double expected = sum_t * sum_p / pairs;
  const double max_index = 0.5 * (sum_t + sum_p);
  EXPECT_NEAR(metrics::ari(t, p), (index - expected) / (max_index - expected), 1e-12);
}

TEST(Frechet, IdentityAndPointMasses) {
  const auto s = data::sample_mixture(data::make_ring(3, 2.0, 0.4), 2000, 5);
  EXPECT_NEAR(metrics::frechet_gaussian(s.x, s.x), 0.0, 1e-8);
  ad::Tensor a = ad::Tensor::matrix(50, 2), b = ad::Tensor::matrix(50, 2);
  for (std::size_t r = 0; r < 50; ++r) {
    b.at(r, 0) = 3.0;
    b.at(r, 1) = 4.0;
  }
  EXPECT_NEAR(metrics::frechet_gaussian(a, b), 25.0, 1e-9);
}

TEST(Frechet, EigenRouteMatchesClosedForm) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n(0, 1);
  for (int trial = 0; trial < 20; ++trial) {
    const double a0 = n(rng), a1 = n(rng), a2 = n(rng), b0 = n(rng), b1 = n(rng), b2 = n(rng);
    // A = L L^T, B = M M^T for lower-triangular L, M
    const std::vector<double> a = {a0 * a0, a0 * a1, a0 * a1, a1 * a1 + a2 * a2};
    const std::vector<double> b = {b0 * b0, b0 * b1, b0 * b1, b1 * b1 + b2 * b2};
    const double det = (a[0] * a[3] - a[1] * a[2]) * (b[0] * b[3] - b[1] * b[2]);
    const double tr = a[0] * b[0] + a[1] * b[2] + a[2] * b[1] + a[3] * b[3];
    EXPECT_NEAR(metrics::trace_sqrt_product(a, b, 2), std::sqrt(tr + 2.0 * std::sqrt(det)), 1e-9);
  }
}

TEST(Coverage, SelfConsistentAndCollapsed) {
  const auto grid = data::make_grid(5, 2.0, 0.05);
  const auto s = data::sample_mixture(grid, 100000, 1);
  const auto c = metrics::mode_coverage(s.x, grid, grid.weights);
  EXPECT_EQ(c.modes_covered, 25u);
  EXPECT_LT(c.histogram_kl, 0.01);
  ad::Tensor collapsed = ad::Tensor::matrix(1000, 2);
  for (std::size_t r = 0; r < 1000; ++r) {
    collapsed.at(r, 0) = grid.means.at(7, 0);
    collapsed.at(r, 1) = grid.means.at(7, 1);
  }
  EXPECT_EQ(metrics::mode_coverage(collapsed, grid, grid.weights).modes_covered, 1u);
}

TEST(Coverage, UniformGridKlWithinMultinomialBand) {
  const auto grid = data::make_grid(5, 2.0, 0.05);
  const std::size_t n = 50000, k = 25;
  const auto s = data::sample_mixture(grid, n, 77);
  const auto c = metrics::mode_coverage(s.x, grid, grid.weights);
  // 2n KL is asymptotically chi-square with K-1 dof
  const double mean = (k - 1) / (2.0 * n);
  const double sd = std::sqrt(2.0 * (k - 1)) / (2.0 * n);
  EXPECT_LT(c.histogram_kl, mean + 3.0 * sd);
  EXPECT_EQ(c.threshold, static_cast<std::size_t>(0.2 * n / k));
}

TEST(Consistency, PerfectInverterHasZeroGap) {
  const std::vector<std::size_t> oracle = {0, 0, 0, 1, 1, 2, 2, 2, 2, 2};
  ad::Tensor post = ad::Tensor::matrix(10, 3);
  const std::size_t relabel[3] = {2, 0, 1};
  for (std::size_t r = 0; r < 10; ++r) post.at(r, relabel[oracle[r]]) = 1.0;
  const std::vector<double> prior = {0.2, 0.3, 0.5};
  const auto pc = metrics::posterior_consistency(post, oracle, prior);
  EXPECT_DOUBLE_EQ(pc.inverter_acc, 1.0);
  EXPECT_NEAR(pc.gap(), 0.0, 1e-12);
}
