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
#include <random>

#include "nemgan/latent.hpp"

namespace ad = nemgan::ad;
namespace lt = nemgan::latent;

namespace {

std::vector<double> softmax(const std::vector<double>& a) {
  double mx = a[0];
  for (double v : a) mx = std::max(mx, v);
  std::vector<double> p(a.size());
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (p[i] = std::exp(a[i] - mx));
  for (double& v : p) v /= s;
  return p;
}

}  // namespace

TEST(Breakpoints, UniformThree) {
  const auto a = lt::breakpoints(lt::AlphaVector::uniform(3));
  EXPECT_NEAR(a[0], 1.0 / 3.0, 1e-15);
  EXPECT_NEAR(a[1], 2.0 / 3.0, 1e-15);
  EXPECT_DOUBLE_EQ(a[2], 1.0);
}

TEST(Breakpoints, LogTwo) {
  const auto a = lt::breakpoints(lt::AlphaVector({std::log(2.0), 0.0}));
  EXPECT_NEAR(a[0], 2.0 / 3.0, 1e-15);
  EXPECT_DOUBLE_EQ(a[1], 1.0);
}

TEST(Breakpoints, DifferencesAreSoftmax) {
  std::mt19937_64 rng(9);
  std::normal_distribution<double> n(0, 2);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> logits(5);
    for (double& v : logits) v = n(rng);
    const auto a = lt::breakpoints(lt::AlphaVector(logits));
    const auto p = softmax(logits);
    for (std::size_t i = 0; i < 5; ++i) EXPECT_NEAR(a[i] - (i ? a[i - 1] : 0.0), p[i], 1e-12);
  }
}

TEST(Alpha, RejectsNonFiniteAndTooFewModes) {
  EXPECT_THROW(lt::AlphaVector({1.0}), std::invalid_argument);
  EXPECT_THROW(lt::AlphaVector({0.0, std::nan("")}), std::invalid_argument);
}

TEST(SoftIndicator, ExactStepExamples) {
  const auto alpha = lt::AlphaVector::uniform(2);
  EXPECT_EQ(lt::soft_indicator(alpha, 0.25, lt::kExactStep), (std::vector<double>{1, 0}));
  EXPECT_EQ(lt::soft_indicator(alpha, 0.75, lt::kExactStep), (std::vector<double>{0, 1}));
}

TEST(SoftIndicator, MidpointAtSlopeTen) {
  const auto f = lt::soft_indicator(lt::AlphaVector::uniform(2), 0.5, 10.0);
  EXPECT_DOUBLE_EQ(f[0], 0.5);
  EXPECT_DOUBLE_EQ(f[1], 0.5);
  EXPECT_EQ(lt::sample_mode(lt::AlphaVector::uniform(2), 0.5, 10.0), 0u);
}

TEST(SoftIndicator, RejectsBadSlopeAndNoise) {
  const auto alpha = lt::AlphaVector::uniform(3);
  EXPECT_THROW(lt::soft_indicator(alpha, 0.5, 0.0), std::invalid_argument);
  EXPECT_THROW(lt::soft_indicator(alpha, 0.5, -1.0), std::invalid_argument);
  EXPECT_THROW(lt::soft_indicator(alpha, 1.5, 10.0), std::invalid_argument);
}

TEST(SoftIndicator, OnTapeMatchesPlainVersion) {
  const lt::AlphaVector alpha({0.3, -1.2, 0.8, 0.1});
  const std::vector<double> nu1 = {0.05, 0.31, 0.52, 0.77, 0.99};
  ad::Tape tape;
  ad::Var f = lt::soft_indicator_on_tape(tape.constant(alpha.as_row()), nu1, 10.0);
  for (std::size_t r = 0; r < nu1.size(); ++r) {
    const auto ref = lt::soft_indicator(alpha, nu1[r], 10.0);
    for (std::size_t c = 0; c < 4; ++c) EXPECT_NEAR(f.value().at(r, c), ref[c], 1e-14);
  }
}

TEST(SampleMode, LowerMode) {
  EXPECT_EQ(lt::sample_mode(lt::AlphaVector::uniform(2), 0.25, 10.0), 0u);
}

TEST(SampleMode, BinomialFrequency) {
  const lt::AlphaVector alpha({std::log(3.0), 0.0});
  std::mt19937_64 rng(42);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const int n = 100000;
  int zeros = 0;
  for (int i = 0; i < n; ++i) zeros += lt::sample_mode(alpha, u(rng), 10.0) == 0;
  // 3 sigma binomial band: 3 * sqrt(0.75 * 0.25 / n) = 0.0041
  EXPECT_NEAR(static_cast<double>(zeros) / n, 0.75, 3.0 * std::sqrt(0.75 * 0.25 / n));
}

TEST(PriorProbs, ClosedForms) {
  const auto p = lt::prior_probs(lt::AlphaVector::uniform(2));
  EXPECT_DOUBLE_EQ(p[0], 0.5);
  const auto q = lt::prior_probs(lt::AlphaVector({std::log(3.0), 0.0}));
  EXPECT_NEAR(q[0], 0.75, 1e-15);
  EXPECT_NEAR(q[1], 0.25, 1e-15);
}

TEST(PriorProbs, ShiftInvariant) {
  const auto p = lt::prior_probs(lt::AlphaVector({0.2, -0.7, 1.9}));
  const auto q = lt::prior_probs(lt::AlphaVector({5.2, 4.3, 6.9}));
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(p[i], q[i], 1e-14);
}

TEST(Layout, OneHotDefaults) {
  const auto layout = lt::ModeLayout::one_hot(8);
  EXPECT_EQ(layout.dim, 8u);
  EXPECT_DOUBLE_EQ(layout.epsilon, 0.3);
  EXPECT_DOUBLE_EQ(layout.centers.at(3, 3), 2.0);
  EXPECT_DOUBLE_EQ(layout.min_center_distance(), 2.0);
}

TEST(Layout, OverlappingBoxesRejected) {
  EXPECT_THROW(lt::ModeLayout::one_hot(3, 2.0, 1.0), std::invalid_argument);
  auto layout = lt::ModeLayout::one_hot(3);
  layout.epsilon = 1.5;
  EXPECT_THROW(layout.validate(), std::invalid_argument);
  EXPECT_THROW(lt::sample_latent(lt::AlphaVector::uniform(3), layout, 4, 10.0, 1),
               std::invalid_argument);
}

TEST(SampleLatent, ExactStepIsInsideExactlyOneBox) {
  const auto layout = lt::ModeLayout::one_hot(5);
  const auto batch = lt::sample_latent(lt::AlphaVector({0.1, 0.4, -0.3, 0.0, 1.0}), layout,
                                       2000, lt::kExactStep, 17, lt::Embedding::kHard);
  for (std::size_t r = 0; r < batch.size(); ++r) {
    std::size_t inside = 0;
    for (std::size_t m = 0; m < layout.modes; ++m) {
      double dist = 0;
      for (std::size_t c = 0; c < layout.dim; ++c) {
        dist = std::max(dist, std::abs(batch.z.at(r, c) - layout.centers.at(m, c)));
      }
      if (dist <= layout.epsilon) {
        ++inside;
        EXPECT_EQ(m, batch.y[r]);
      }
    }
    EXPECT_EQ(inside, 1u);
  }
}

TEST(SampleLatent, UniformCountsWithinMultinomialBand) {
  const auto layout = lt::ModeLayout::one_hot(8);
  const std::size_t n = 80000;
  const auto batch = lt::sample_latent(lt::AlphaVector::uniform(8), layout, n, 10.0, 3);
  std::vector<std::size_t> counts(8);
  for (std::size_t y : batch.y) ++counts[y];
  const double sigma = std::sqrt(n * (1.0 / 8) * (7.0 / 8));
  for (std::size_t c : counts) EXPECT_NEAR(static_cast<double>(c), 10000.0, 3.0 * sigma);
}

TEST(SampleLatent, ZeroJitterGivesCenters) {
  const auto layout = lt::ModeLayout::one_hot(4, 2.0, 0.0);
  const auto batch = lt::sample_latent(lt::AlphaVector::uniform(4), layout, 100, lt::kExactStep,
                                       5, lt::Embedding::kHard);
  for (std::size_t r = 0; r < batch.size(); ++r) {
    for (std::size_t c = 0; c < 4; ++c) {
      EXPECT_EQ(batch.z.at(r, c), layout.centers.at(batch.y[r], c));
    }
  }
}

TEST(SampleLatent, SoftRowsSumToOneAndSeedReproduces) {
  const auto layout = lt::ModeLayout::one_hot(6);
  const lt::AlphaVector alpha({0.5, 0.1, -0.2, 0.3, 0.0, -1.0});
  const auto a = lt::sample_latent(alpha, layout, 500, 10.0, 99);
  const auto b = lt::sample_latent(alpha, layout, 500, 10.0, 99);
  EXPECT_EQ(a.z, b.z);
  EXPECT_EQ(a.y, b.y);
  for (std::size_t r = 0; r < a.size(); ++r) {
    double s = 0;
    for (std::size_t c = 0; c < 6; ++c) s += a.f.at(r, c);
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
}

TEST(SampleConditional, FixedModeAndBadIndex) {
  const auto layout = lt::ModeLayout::one_hot(4);
  std::mt19937_64 rng(1);
  const auto batch = lt::sample_conditional(layout, 2, 50, rng);
  for (std::size_t r = 0; r < 50; ++r) {
    EXPECT_EQ(batch.y[r], 2u);
    EXPECT_EQ(layout.locate(batch.z.data().subspan(r * 4, 4)), 2u);
  }
  EXPECT_THROW(lt::sample_conditional(layout, 4, 1, rng), std::out_of_range);
}

TEST(LatentOnTape, AlphaGradientMatchesFiniteDifferences) {
  const auto layout = lt::ModeLayout::one_hot(4);
  std::mt19937_64 rng(21);
  lt::LatentNoise noise = lt::draw_noise(layout, 64, rng);
  std::vector<double> w(64 * 4);
  std::normal_distribution<double> n(0, 1);
  for (double& v : w) v = n(rng);
  const lt::AlphaVector alpha({0.2, -0.4, 0.7, 0.0});
  const double slope = 10.0;
  // Keep every nu1 clear of the clamp kinks so the central difference is valid.
  const auto a = lt::breakpoints(alpha);
  for (double& nu : noise.nu1) {
    for (double ai : a) {
      const double u = slope * (ai - nu) + 0.5;
      if (std::abs(u) < 1e-3 || std::abs(u - 1.0) < 1e-3) nu = std::min(0.999, nu + 0.002);
    }
  }
  auto fn = [&](ad::Tape& t, std::span<const ad::Var> p) {
    ad::Var z = lt::latent_on_tape(p[0], noise, layout, slope);
    return ad::sum(ad::mul(z, t.constant(ad::Tensor({64, 4}, w))));
  };
  const auto r = ad::grad_check(fn, {alpha.as_row()});
  EXPECT_LT(r.max_relative_error, 1e-4);
}
