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

#include <benchmark/benchmark.h>

#include <random>

#include "nemgan/trainer.hpp"

namespace ad = nemgan::ad;
namespace data = nemgan::data;
namespace train = nemgan::train;

static ad::Tensor random_matrix(std::size_t r, std::size_t c, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0, 1);
  ad::Tensor t = ad::Tensor::matrix(r, c);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = n(rng);
  return t;
}

static void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const ad::Tensor a = random_matrix(n, 128, 1), b = random_matrix(128, 128, 2);
  for (auto _ : state) benchmark::DoNotOptimize(ad::matmul(a, b));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n * 128 * 128));
}
BENCHMARK(BM_Matmul)->Arg(64)->Arg(256);

static void BM_MlpForwardBackward(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto nets = nemgan::nets::init_networks(nemgan::nets::NetworkSpecs::defaults(8, 2, 8), 3);
  const ad::Tensor z = random_matrix(n, 8, 4);
  for (auto _ : state) {
    ad::Tape tape;
    const auto g = nemgan::nets::bind(tape, nets.g, true);
    auto loss = ad::mean(nemgan::nets::g_forward(g, tape.constant(z)));
    benchmark::DoNotOptimize(tape.backward(loss));
  }
}
BENCHMARK(BM_MlpForwardBackward)->Arg(64)->Arg(256);

static void BM_TrainStep(benchmark::State& state) {
  train::TrainConfig cfg;
  cfg.batch = static_cast<std::size_t>(state.range(0));
  const auto spec = data::make_ring(8);
  auto st = train::init_state(train::ModelConfig{}, cfg, spec);
  const auto real = data::sample_mixture(spec, cfg.batch, 5).x;
  for (auto _ : state) benchmark::DoNotOptimize(train::train_step(st, real, cfg));
}
BENCHMARK(BM_TrainStep)->Arg(64)->Arg(256)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
