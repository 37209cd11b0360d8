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

#include <cmath>
#include <filesystem>
#include <set>

#include "nemgan/data.hpp"

namespace ad = nemgan::ad;
namespace data = nemgan::data;

TEST(Mixture, RingGeometry) {
  const auto ring = data::make_ring(8, 2.0, 0.05);
  const double dx = ring.means.at(1, 0) - ring.means.at(0, 0);
  const double dy = ring.means.at(1, 1) - ring.means.at(0, 1);
  EXPECT_NEAR(std::hypot(dx, dy), 4.0 * std::sin(M_PI / 8.0), 1e-12);
  EXPECT_NEAR(std::hypot(dx, dy), 1.5307, 1e-4);
  for (std::size_t i = 0; i < 8; ++i) {
    EXPECT_NEAR(std::hypot(ring.means.at(i, 0), ring.means.at(i, 1)), 2.0, 1e-12);
  }
}

TEST(Mixture, Counts) {
  EXPECT_EQ(data::make_grid(5, 2.0, 0.05).components(), 25u);
  const auto f = data::make_factored(3, 5);
  EXPECT_EQ(f.components(), 125u);
  EXPECT_EQ(f.dim, 6u);
}

TEST(Mixture, InvalidSimplexRejected) {
  EXPECT_THROW(data::make_skewed(data::make_ring(2), {0.5, 0.6}), std::invalid_argument);
  EXPECT_THROW(data::make_skewed(data::make_ring(2), {1.2, -0.2}), std::invalid_argument);
  EXPECT_THROW(data::make_skewed(data::make_ring(3), {0.5, 0.5}), std::invalid_argument);
}

TEST(Sampling, SkewedBinomialCount) {
  const auto spec = data::make_skewed(data::make_ring(2), {0.9, 0.1});
  const std::size_t n = 100000;
  const auto s = data::sample_mixture(spec, n, 12);
  std::size_t zeros = 0;
  for (std::size_t l : s.labels) zeros += l == 0;
  EXPECT_NEAR(static_cast<double>(zeros), 90000.0, 3.0 * std::sqrt(n * 0.9 * 0.1));
}

TEST(Sampling, ZeroStdGivesMeans) {
  auto spec = data::make_ring(4, 2.0, 1e-300);
  const auto s = data::sample_mixture(spec, 100, 3);
  for (std::size_t r = 0; r < 100; ++r) {
    EXPECT_NEAR(s.x.at(r, 0), spec.means.at(s.labels[r], 0), 1e-290);
    EXPECT_NEAR(s.x.at(r, 1), spec.means.at(s.labels[r], 1), 1e-290);
  }
}

TEST(Sampling, ComponentMeansWithinClt) {
  const auto spec = data::make_grid(3, 2.0, 0.3);
  const auto s = data::sample_mixture(spec, 45000, 8);
  std::vector<double> sx(9), sy(9);
  std::vector<std::size_t> n(9);
  for (std::size_t r = 0; r < s.size(); ++r) {
    sx[s.labels[r]] += s.x.at(r, 0);
    sy[s.labels[r]] += s.x.at(r, 1);
    ++n[s.labels[r]];
  }
  for (std::size_t k = 0; k < 9; ++k) {
    const double band = 5.0 * 0.3 / std::sqrt(static_cast<double>(n[k]));
    EXPECT_NEAR(sx[k] / n[k], spec.means.at(k, 0), band);
    EXPECT_NEAR(sy[k] / n[k], spec.means.at(k, 1), band);
  }
}

TEST(Subset, FractionArithmetic) {
  const auto s = data::sample_mixture(data::make_ring(8), 50000, 1);
  const auto sub = data::draw_supervised_subset(s.labels, 0.01, 2);
  EXPECT_EQ(sub.indices.size(), 500u);
  EXPECT_EQ(std::set<std::size_t>(sub.indices.begin(), sub.indices.end()).size(), 500u);
  for (std::size_t i = 0; i < sub.indices.size(); ++i) {
    EXPECT_EQ(sub.labels[i], s.labels[sub.indices[i]]);
  }
}

TEST(Subset, EveryClassPresent) {
  const auto s = data::sample_mixture(data::make_ring(10), 50000, 4);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto sub = data::draw_supervised_subset(s.labels, 0.01, seed);
    EXPECT_EQ(std::set<std::size_t>(sub.labels.begin(), sub.labels.end()).size(), 10u);
  }
  const auto skew = data::sample_mixture(data::make_skewed(data::make_ring(2), {0.9, 0.1}), 50000, 5);
  const auto sub = data::draw_supervised_subset(skew.labels, 0.01, 6);
  EXPECT_EQ(std::set<std::size_t>(sub.labels.begin(), sub.labels.end()).size(), 2u);
}

TEST(Subset, FractionOutOfRange) {
  const std::vector<std::size_t> labels(1000, 0);
  EXPECT_THROW(data::draw_supervised_subset(labels, 0.0, 1), std::invalid_argument);
  EXPECT_THROW(data::draw_supervised_subset(labels, 0.06, 1), std::invalid_argument);
}

TEST(Oracle, MeansAndTies) {
  const auto ring = data::make_ring(8);
  const auto labels = data::oracle_mode_assign(ring.means, ring);
  for (std::size_t i = 0; i < 8; ++i) EXPECT_EQ(labels[i], i);
  ad::Tensor mid = ad::Tensor::matrix(1, 2);
  mid.at(0, 0) = 0.5 * (ring.means.at(2, 0) + ring.means.at(3, 0));
  mid.at(0, 1) = 0.5 * (ring.means.at(2, 1) + ring.means.at(3, 1));
  EXPECT_EQ(data::oracle_mode_assign(mid, ring)[0], 2u);
  // exact tie on a lattice
  const auto grid = data::make_grid(2, 2.0, 0.05);
  EXPECT_EQ(data::oracle_mode_assign(ad::Tensor::matrix(1, 2), grid)[0], 0u);
}

TEST(Oracle, AgreesWithBruteForceDensity) {
  auto spec = data::make_skewed(data::make_grid(3, 2.0, 0.4), {0.3, 0.05, 0.1, 0.05, 0.1, 0.05,
                                                                0.1, 0.05, 0.2});
  spec.stds = {0.4, 0.5, 0.6, 0.3, 0.7, 0.4, 0.5, 0.2, 0.9};
  const auto s = data::sample_mixture(spec, 5000, 9);
  const auto labels = data::oracle_mode_assign(s.x, spec);
  for (std::size_t r = 0; r < s.size(); ++r) {
    std::size_t best = 0;
    double best_density = -1.0;
    for (std::size_t k = 0; k < spec.components(); ++k) {
      const double dx = s.x.at(r, 0) - spec.means.at(k, 0);
      const double dy = s.x.at(r, 1) - spec.means.at(k, 1);
      const double var = spec.stds[k] * spec.stds[k];
      const double density =
          spec.weights[k] / (2 * M_PI * var) * std::exp(-(dx * dx + dy * dy) / (2 * var));
      if (density > best_density) {
        best_density = density;
        best = k;
      }
    }
    EXPECT_EQ(labels[r], best) << "row " << r;
  }
}

TEST(Dataset, SplitAndBalancedTest) {
  const auto ds = data::make_dataset(data::make_skewed(data::make_ring(2), {0.9, 0.1}), 10000, 300, 3);
  EXPECT_EQ(ds.train.size(), 8000u);
  EXPECT_EQ(ds.test.size(), 2000u);
  ASSERT_EQ(ds.balanced_test.size(), 600u);
  std::size_t zeros = 0;
  for (std::size_t l : ds.balanced_test.labels) zeros += l == 0;
  EXPECT_EQ(zeros, 300u);
}

TEST(Csv, RoundTrip) {
  const auto s = data::sample_mixture(data::make_ring(3), 25, 2);
  const auto path = std::filesystem::temp_directory_path() / "nemgan_csv_roundtrip.csv";
  data::write_csv(path, s);
  const auto back = data::read_csv(path);
  EXPECT_EQ(back.x, s.x);
  EXPECT_EQ(back.labels, s.labels);
  std::filesystem::remove(path);
}
