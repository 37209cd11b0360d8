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
#include <string>
#include <vector>

#include "nemgan/autodiff.hpp"

namespace nemgan::nets {

enum class Activation { kRelu, kTanh };

// Every output kind is linear in the last layer; the kind only records how
// the caller interprets it (losses fold sigmoid/softmax in themselves).
enum class OutputKind { kLinear, kSigmoidLogit, kSoftmaxLogit };

struct MlpSpec {
  // input width, hidden widths..., output width
  std::vector<std::size_t> widths;
  Activation hidden = Activation::kRelu;
  OutputKind output = OutputKind::kLinear;

  std::size_t input_dim() const { return widths.front(); }
  std::size_t output_dim() const { return widths.back(); }
  std::size_t layers() const { return widths.size() - 1; }
  void validate() const;
};

struct Mlp {
  std::string name;
  MlpSpec spec;
  std::vector<ad::Tensor> params;  // W0, b0, W1, b1, ...
};

struct NetworkSpecs {
  MlpSpec g, d, h1, h2;

  // g: latent -> data, d: data -> logit, h1: data -> latent, h2: latent -> M logits.
  static NetworkSpecs defaults(std::size_t latent_dim, std::size_t data_dim, std::size_t modes);
  void validate() const;
};

struct NetworkSet {
  Mlp g, d, h1, h2;
};

NetworkSet init_networks(const NetworkSpecs& specs, std::uint64_t seed);

// A network whose parameters have been placed on a tape.
struct BoundNet {
  const Mlp* net = nullptr;
  std::vector<ad::Var> params;

  ad::Var operator()(ad::Var x) const;
};

BoundNet bind(ad::Tape& tape, const Mlp& net, bool trainable);

ad::Var g_forward(const BoundNet& g, ad::Var z);
ad::Var d_forward(const BoundNet& d, ad::Var x);
ad::Var h1_forward(const BoundNet& h1, ad::Var x);
ad::Var h2_forward(const BoundNet& h2, ad::Var zhat);

// Gradient-free evaluation.
ad::Tensor evaluate(const Mlp& net, const ad::Tensor& x);
// softmax(h2(h1(x))) rows
ad::Tensor posterior(const NetworkSet& nets, const ad::Tensor& x);

std::uint64_t checksum(const Mlp& net);
std::uint64_t checksum(const NetworkSet& nets);

}  // namespace nemgan::nets
