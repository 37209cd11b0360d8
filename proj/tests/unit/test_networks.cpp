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

#include "nemgan/networks.hpp"

namespace ad = nemgan::ad;
namespace nets = nemgan::nets;

TEST(Networks, DefaultBodies) {
  const auto s = nets::NetworkSpecs::defaults(8, 2, 8);
  EXPECT_EQ(s.g.widths, (std::vector<std::size_t>{8, 128, 128, 2}));
  EXPECT_EQ(s.d.widths, (std::vector<std::size_t>{2, 128, 128, 1}));
  EXPECT_EQ(s.h1.widths, (std::vector<std::size_t>{2, 128, 128, 8}));
  EXPECT_EQ(s.h2.widths, (std::vector<std::size_t>{8, 64, 8}));
  EXPECT_NO_THROW(s.validate());
}

TEST(Networks, MismatchedDimsNamePair) {
  auto s = nets::NetworkSpecs::defaults(8, 2, 8);
  s.h1.widths.back() = 7;
  try {
    s.validate();
    FAIL() << "expected invalid_argument";
  } catch (const std::invalid_argument& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("h1"), std::string::npos) << msg;
    EXPECT_NE(msg.find("h2"), std::string::npos) << msg;
  }
  EXPECT_THROW(nets::init_networks(s, 1), std::invalid_argument);
}

TEST(Networks, MlpNeedsHiddenLayer) {
  nets::MlpSpec spec{{3, 2}};
  EXPECT_THROW(spec.validate(), std::invalid_argument);
  spec.widths = {3, 0, 2};
  EXPECT_THROW(spec.validate(), std::invalid_argument);
}

TEST(Networks, SameSeedSameParameters) {
  const auto s = nets::NetworkSpecs::defaults(4, 2, 4);
  const auto a = nets::init_networks(s, 123);
  const auto b = nets::init_networks(s, 123);
  const auto c = nets::init_networks(s, 124);
  EXPECT_EQ(a.g.params, b.g.params);
  EXPECT_EQ(a.h2.params, b.h2.params);
  EXPECT_EQ(nets::checksum(a), nets::checksum(b));
  EXPECT_NE(nets::checksum(a), nets::checksum(c));
}

TEST(Networks, ZeroInputGivesZeroOutputAtInit) {
  const auto n = nets::init_networks(nets::NetworkSpecs::defaults(8, 2, 8), 7);
  const ad::Tensor out = nets::evaluate(n.g, ad::Tensor::matrix(3, 8));
  for (std::size_t i = 0; i < out.size(); ++i) EXPECT_EQ(out[i], 0.0);
}

TEST(Networks, InitVarianceIsHe) {
  const auto s = nets::NetworkSpecs::defaults(8, 2, 8);
  for (std::size_t layer = 0; layer < s.g.layers(); ++layer) {
    double sum = 0, sumsq = 0;
    std::size_t count = 0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      const auto n = nets::init_networks(s, seed);
      for (double w : n.g.params[2 * layer].vec()) {
        sum += w;
        sumsq += w * w;
        ++count;
      }
      for (double b : n.g.params[2 * layer + 1].vec()) EXPECT_EQ(b, 0.0);
    }
    const double mean = sum / count;
    const double var = sumsq / count - mean * mean;
    const double expected = 2.0 / static_cast<double>(s.g.widths[layer]);
    EXPECT_NEAR(var, expected, 0.2 * expected) << "layer " << layer;
  }
}

TEST(Networks, PosteriorRowsAreSimplex) {
  const auto n = nets::init_networks(nets::NetworkSpecs::defaults(5, 2, 5), 3);
  std::mt19937_64 rng(1);
  std::normal_distribution<double> g(0, 2);
  ad::Tensor x = ad::Tensor::matrix(40, 2);
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = g(rng);
  const ad::Tensor p = nets::posterior(n, x);
  ASSERT_EQ(p.shape(), (ad::Shape{40, 5}));
  for (std::size_t r = 0; r < 40; ++r) {
    double s = 0;
    for (std::size_t c = 0; c < 5; ++c) {
      EXPECT_GE(p.at(r, c), 0.0);
      s += p.at(r, c);
    }
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
  const ad::Tensor logits = nets::evaluate(n.d, x);
  EXPECT_TRUE(logits.all_finite());
  EXPECT_EQ(logits.shape(), (ad::Shape{40, 1}));
}

TEST(Networks, TapeForwardMatchesEvaluate) {
  const auto n = nets::init_networks(nets::NetworkSpecs::defaults(3, 2, 3), 5);
  ad::Tensor z = ad::Tensor::matrix(4, 3);
  for (std::size_t i = 0; i < z.size(); ++i) z[i] = 0.1 * static_cast<double>(i) - 0.5;
  ad::Tape tape;
  const auto g = nets::bind(tape, n.g, true);
  EXPECT_EQ(nets::g_forward(g, tape.constant(z)).value(), nets::evaluate(n.g, z));
}

TEST(Networks, CompositeGradientMatchesFiniteDifferences) {
  // Small tanh bodies keep the full probe fast and free of relu kinks.
  const nets::NetworkSpecs specs{{{4, 16, 2}, nets::Activation::kTanh},
                                 {{2, 8, 1}, nets::Activation::kTanh},
                                 {{2, 16, 4}, nets::Activation::kTanh},
                                 {{4, 8, 4}, nets::Activation::kTanh}};
  const auto n = nets::init_networks(specs, 8);
  ad::Tensor z = ad::Tensor::matrix(6, 4);
  std::mt19937_64 rng(2);
  std::normal_distribution<double> g(0, 1);
  for (std::size_t i = 0; i < z.size(); ++i) z[i] = g(rng);
  const std::vector<std::size_t> y = {0, 1, 2, 3, 0, 1};
  auto fn = [&](ad::Tape& t, std::span<const ad::Var> p) {
    nets::BoundNet gb{&n.g, {p.begin(), p.end()}};
    const auto h1 = nets::bind(t, n.h1, false);
    const auto h2 = nets::bind(t, n.h2, false);
    ad::Var logits = nets::h2_forward(h2, nets::h1_forward(h1, nets::g_forward(gb, t.constant(z))));
    return ad::cross_entropy_with_logits(logits, y);
  };
  const auto r = ad::grad_check(fn, n.g.params);
  EXPECT_LT(r.max_relative_error, 1e-4);
}

TEST(Networks, NonFiniteActivationNamesLayer) {
  auto n = nets::init_networks(nets::NetworkSpecs::defaults(2, 2, 2), 1);
  for (std::size_t i = 0; i < n.g.params[0].size(); ++i) n.g.params[0][i] = 1e300;
  ad::Tape tape;
  const auto g = nets::bind(tape, n.g, false);
  ad::Tensor z = ad::Tensor::matrix(1, 2, 1e10);
  try {
    nets::g_forward(g, tape.constant(z));
    FAIL() << "expected NumericError";
  } catch (const ad::NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("layer"), std::string::npos) << e.what();
  }
}
