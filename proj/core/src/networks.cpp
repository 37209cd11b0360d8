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

#include "nemgan/networks.hpp"

#include <cmath>
#include <cstring>
#include <random>
#include <stdexcept>

namespace nemgan::nets {

namespace {

void check_chain(std::size_t out, std::string_view out_name, std::size_t in,
                 std::string_view in_name) {
  if (out != in) {
    throw std::invalid_argument(std::string(out_name) + " output width " + std::to_string(out) +
                                " does not match " + std::string(in_name) + " input width " +
                                std::to_string(in));
  }
}

Mlp make_mlp(std::string name, const MlpSpec& spec, std::mt19937_64& rng) {
  spec.validate();
  Mlp net{std::move(name), spec, {}};
  for (std::size_t l = 0; l < spec.layers(); ++l) {
    const std::size_t fan_in = spec.widths[l];
    const std::size_t fan_out = spec.widths[l + 1];
    std::normal_distribution<double> normal(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
    ad::Tensor w = ad::Tensor::matrix(fan_in, fan_out);
    for (double& v : w.data()) v = normal(rng);
    net.params.push_back(std::move(w));
    net.params.push_back(ad::Tensor::matrix(1, fan_out));
  }
  return net;
}

double activate(Activation a, double x) {
  return a == Activation::kRelu ? (x > 0 ? x : 0.0) : std::tanh(x);
}

std::uint64_t fnv1a(std::uint64_t h, const ad::Tensor& t) {
  for (double v : t.data()) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, sizeof bits);
    for (int b = 0; b < 8; ++b) {
      h ^= (bits >> (8 * b)) & 0xffu;
      h *= 1099511628211ull;
    }
  }
  return h;
}

}  // namespace

void MlpSpec::validate() const {
  if (widths.size() < 3) {
    throw std::invalid_argument("mlp needs an input width, >= 1 hidden layer and an output width");
  }
  for (std::size_t w : widths) {
    if (w == 0) throw std::invalid_argument("mlp widths must be positive");
  }
}

NetworkSpecs NetworkSpecs::defaults(std::size_t latent_dim, std::size_t data_dim,
                                    std::size_t modes) {
  NetworkSpecs s;
  s.g = {{latent_dim, 128, 128, data_dim}, Activation::kRelu, OutputKind::kLinear};
  s.d = {{data_dim, 128, 128, 1}, Activation::kRelu, OutputKind::kSigmoidLogit};
  s.h1 = {{data_dim, 128, 128, latent_dim}, Activation::kRelu, OutputKind::kLinear};
  s.h2 = {{latent_dim, 64, modes}, Activation::kRelu, OutputKind::kSoftmaxLogit};
  return s;
}

void NetworkSpecs::validate() const {
  g.validate();
  d.validate();
  h1.validate();
  h2.validate();
  check_chain(g.output_dim(), "g", d.input_dim(), "d");
  check_chain(g.output_dim(), "g", h1.input_dim(), "h1");
  check_chain(h1.output_dim(), "h1", h2.input_dim(), "h2");
  check_chain(h1.output_dim(), "h1", g.input_dim(), "g (latent)");
  if (d.output_dim() != 1) {
    throw std::invalid_argument("d output width must be 1, got " +
                                std::to_string(d.output_dim()));
  }
}

NetworkSet init_networks(const NetworkSpecs& specs, std::uint64_t seed) {
  specs.validate();
  std::mt19937_64 rng(seed);
  NetworkSet set;
  set.g = make_mlp("g", specs.g, rng);
  set.d = make_mlp("d", specs.d, rng);
  set.h1 = make_mlp("h1", specs.h1, rng);
  set.h2 = make_mlp("h2", specs.h2, rng);
  return set;
}

BoundNet bind(ad::Tape& tape, const Mlp& net, bool trainable) {
  BoundNet b{&net, {}};
  b.params.reserve(net.params.size());
  for (const ad::Tensor& p : net.params) b.params.push_back(tape.leaf(p, trainable));
  return b;
}

ad::Var BoundNet::operator()(ad::Var x) const {
  const MlpSpec& spec = net->spec;
  if (x.value().cols() != spec.input_dim()) {
    throw ad::ShapeError(net->name + ": expected input width " +
                         std::to_string(spec.input_dim()) + ", got " +
                         ad::shape_str(x.value().shape()));
  }
  ad::Var h = x;
  for (std::size_t l = 0; l < spec.layers(); ++l) {
    try {
      h = ad::add(ad::matmul(h, params[2 * l]), params[2 * l + 1]);
      if (l + 1 < spec.layers()) {
        h = spec.hidden == Activation::kRelu ? ad::relu(h) : ad::tanh(h);
      }
    } catch (const ad::NumericError& e) {
      throw ad::NumericError(net->name + " layer " + std::to_string(l) + ": " + e.what());
    }
  }
  return h;
}

ad::Var g_forward(const BoundNet& g, ad::Var z) { return g(z); }
ad::Var d_forward(const BoundNet& d, ad::Var x) { return d(x); }
ad::Var h1_forward(const BoundNet& h1, ad::Var x) { return h1(x); }
ad::Var h2_forward(const BoundNet& h2, ad::Var zhat) { return h2(zhat); }

ad::Tensor evaluate(const Mlp& net, const ad::Tensor& x) {
  const MlpSpec& spec = net.spec;
  if (x.cols() != spec.input_dim()) {
    throw ad::ShapeError(net.name + ": expected input width " +
                         std::to_string(spec.input_dim()) + ", got " +
                         ad::shape_str(x.shape()));
  }
  ad::Tensor h = x;
  for (std::size_t l = 0; l < spec.layers(); ++l) {
    h = ad::matmul(h, net.params[2 * l]);
    const ad::Tensor& b = net.params[2 * l + 1];
    const bool last = l + 1 == spec.layers();
    for (std::size_t r = 0; r < h.rows(); ++r) {
      for (std::size_t c = 0; c < h.cols(); ++c) {
        double& v = h.at(r, c);
        v += b[c];
        if (!last) v = activate(spec.hidden, v);
      }
    }
    if (!h.all_finite()) {
      throw ad::NumericError(net.name + " layer " + std::to_string(l) +
                             ": produced a non-finite value");
    }
  }
  return h;
}

ad::Tensor posterior(const NetworkSet& nets, const ad::Tensor& x) {
  return ad::softmax_rows(evaluate(nets.h2, evaluate(nets.h1, x)));
}

std::uint64_t checksum(const Mlp& net) {
  std::uint64_t h = 1469598103934665603ull;
  for (const ad::Tensor& p : net.params) h = fnv1a(h, p);
  return h;
}

std::uint64_t checksum(const NetworkSet& nets) {
  std::uint64_t h = checksum(nets.g);
  h = h * 31 + checksum(nets.d);
  h = h * 31 + checksum(nets.h1);
  return h * 31 + checksum(nets.h2);
}

}  // namespace nemgan::nets
