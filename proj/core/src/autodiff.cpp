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

#include "nemgan/autodiff.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

namespace nemgan::ad {

namespace {

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMajor>;
using MutMap = Eigen::Map<RowMajor>;

ConstMap as_matrix(const Tensor& t) {
  return ConstMap(t.data().data(), static_cast<Eigen::Index>(t.rows()),
                  static_cast<Eigen::Index>(t.cols()));
}

MutMap as_matrix(Tensor& t) {
  return MutMap(t.data().data(), static_cast<Eigen::Index>(t.rows()),
                static_cast<Eigen::Index>(t.cols()));
}

std::size_t product(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

void require_same_tape(Var a, Var b, std::string_view op) {
  if (a.tape == nullptr || a.tape != b.tape) {
    throw std::invalid_argument(std::string(op) + ": operands live on different tapes");
  }
}

[[noreturn]] void shape_mismatch(std::string_view op, const Shape& a, const Shape& b) {
  throw ShapeError(std::string(op) + ": incompatible shapes " + shape_str(a) + " and " +
                   shape_str(b));
}

Tensor finite_or_throw(Tensor t, std::string_view op) {
  if (!t.all_finite()) {
    throw NumericError(std::string(op) + ": produced a non-finite value");
  }
  return t;
}

template <typename F>
Tensor map_values(const Tensor& in, F&& f) {
  Tensor out(in.shape());
  auto src = in.data();
  auto dst = out.data();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = f(src[i]);
  return out;
}

double softplus(double x) {
  // log(1 + e^x) without overflow
  return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

double logistic(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)) {
  if (shape_.empty() || std::find(shape_.begin(), shape_.end(), 0u) != shape_.end()) {
    throw ShapeError("tensor shape must be a non-empty list of positive sizes, got " +
                     shape_str(shape_));
  }
  data_.assign(product(shape_), fill);
}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)) {
  if (shape_.empty() || std::find(shape_.begin(), shape_.end(), 0u) != shape_.end()) {
    throw ShapeError("tensor shape must be a non-empty list of positive sizes, got " +
                     shape_str(shape_));
  }
  if (product(shape_) != data.size()) {
    throw ShapeError("tensor data length " + std::to_string(data.size()) +
                     " does not match shape " + shape_str(shape_));
  }
  data_ = std::move(data);
}

Tensor Tensor::row(std::vector<double> values) {
  const std::size_t n = values.size();
  return Tensor({1, n}, std::move(values));
}

Tensor Tensor::column(std::vector<double> values) {
  const std::size_t n = values.size();
  return Tensor({n, 1}, std::move(values));
}

std::size_t Tensor::rows() const {
  if (shape_.size() <= 1) return 1;
  return data_.size() / shape_.back();
}

std::size_t Tensor::cols() const { return shape_.empty() ? 0 : shape_.back(); }

double Tensor::item() const {
  if (data_.size() != 1) {
    throw ShapeError("item() needs a single-element tensor, got " + shape_str(shape_));
  }
  return data_[0];
}

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

const Tensor& Var::value() const { return tape->value(*this); }

bool Gradients::contains(Var v) const { return v.id < present_.size() && present_[v.id]; }

const Tensor& Gradients::operator[](Var v) const {
  if (!contains(v)) throw std::out_of_range("no gradient recorded for this variable");
  return grads_[v.id];
}

Var Tape::leaf(Tensor value, bool trainable) {
  if (!value.all_finite()) throw NumericError("leaf: non-finite value");
  nodes_.push_back(Node{trainable ? "param" : "const", std::move(value), {}, {}, trainable,
                        trainable});
  return Var{this, nodes_.size() - 1};
}

Var Tape::record(std::string_view name, Tensor value, std::vector<Var> inputs,
                 Adjoint adjoint) {
  Node n;
  n.name = std::string(name);
  n.value = finite_or_throw(std::move(value), name);
  for (Var in : inputs) {
    if (in.tape != this || in.id >= nodes_.size()) {
      throw std::invalid_argument(n.name + ": input does not belong to this tape");
    }
    n.inputs.push_back(in.id);
    n.requires_grad = n.requires_grad || nodes_[in.id].requires_grad;
  }
  n.adjoint = std::move(adjoint);
  nodes_.push_back(std::move(n));
  return Var{this, nodes_.size() - 1};
}

const Tape::Node& Tape::node(Var v) const {
  if (v.tape != this || v.id >= nodes_.size()) {
    throw std::invalid_argument("variable does not belong to this tape");
  }
  return nodes_[v.id];
}

const Tensor& Tape::value(Var v) const { return node(v).value; }
bool Tape::requires_grad(Var v) const { return node(v).requires_grad; }
bool Tape::is_trainable(Var v) const { return node(v).trainable; }
std::string_view Tape::op_name(Var v) const { return node(v).name; }

Gradients Tape::backward(Var loss) const {
  const Node& root = node(loss);
  if (root.value.size() != 1) {
    throw ShapeError("backward: loss must be scalar, got " + shape_str(root.value.shape()));
  }
  Gradients out;
  out.grads_.resize(loss.id + 1);
  out.present_.assign(loss.id + 1, false);
  if (!root.requires_grad) return out;

  std::vector<Tensor>& g = out.grads_;
  std::vector<bool> live(loss.id + 1, false);
  auto touch = [&](std::size_t id) -> Tensor& {
    if (!live[id]) {
      g[id] = Tensor(nodes_[id].value.shape(), 0.0);
      live[id] = true;
    }
    return g[id];
  };
  touch(loss.id)[0] = 1.0;

  std::vector<Tensor*> in_grads;
  for (std::size_t id = loss.id + 1; id-- > 0;) {
    if (!live[id]) continue;
    const Node& n = nodes_[id];
    if (n.inputs.empty()) continue;
    in_grads.assign(n.inputs.size(), nullptr);
    for (std::size_t k = 0; k < n.inputs.size(); ++k) {
      if (nodes_[n.inputs[k]].requires_grad) in_grads[k] = &touch(n.inputs[k]);
    }
    n.adjoint(*this, g[id], in_grads);
  }
  for (std::size_t id = 0; id <= loss.id; ++id) {
    if (nodes_[id].trainable && live[id]) {
      out.present_[id] = true;
      ++out.count_;
    } else if (nodes_[id].trainable) {
      g[id] = Tensor(nodes_[id].value.shape(), 0.0);
      out.present_[id] = true;
      ++out.count_;
    } else {
      g[id] = Tensor();
    }
  }
  return out;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows()) shape_mismatch("matmul", a.shape(), b.shape());
  Tensor out = Tensor::matrix(a.rows(), b.cols());
  as_matrix(out).noalias() = as_matrix(a) * as_matrix(b);
  return out;
}

Var matmul(Var a, Var b) {
  require_same_tape(a, b, "matmul");
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.shape().size() > 2 || bv.shape().size() > 2 || av.cols() != bv.rows()) {
    shape_mismatch("matmul", av.shape(), bv.shape());
  }
  Tensor out = matmul(av, bv);
  const std::size_t ia = a.id, ib = b.id;
  return a.tape->record(
      "matmul", std::move(out), {a, b},
      [ia, ib](const Tape& t, const Tensor& go, std::span<Tensor* const> gi) {
        const Tensor& A = t.value(Var{const_cast<Tape*>(&t), ia});
        const Tensor& B = t.value(Var{const_cast<Tape*>(&t), ib});
        if (gi[0]) as_matrix(*gi[0]).noalias() += as_matrix(go) * as_matrix(B).transpose();
        if (gi[1]) as_matrix(*gi[1]).noalias() += as_matrix(A).transpose() * as_matrix(go);
      });
}

namespace {

enum class Broadcast { kSame, kRow };

Broadcast check_binary(const Tensor& a, const Tensor& b, std::string_view op) {
  if (a.shape() == b.shape()) return Broadcast::kSame;
  if (b.rows() == 1 && b.cols() == a.cols() && b.shape().size() <= 2 &&
      a.shape().size() <= 2) {
    return Broadcast::kRow;
  }
  shape_mismatch(op, a.shape(), b.shape());
}

Var add_or_sub(Var a, Var b, double sign, std::string_view op) {
  require_same_tape(a, b, op);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  const Broadcast mode = check_binary(av, bv, op);
  Tensor out = av;
  const std::size_t cols = av.cols();
  auto o = out.data();
  auto bd = bv.data();
  for (std::size_t i = 0; i < o.size(); ++i) {
    o[i] += sign * bd[mode == Broadcast::kSame ? i : i % cols];
  }
  return a.tape->record(
      op, std::move(out), {a, b},
      [sign, mode, cols](const Tape&, const Tensor& go, std::span<Tensor* const> gi) {
        auto gd = go.data();
        if (gi[0]) {
          auto d = gi[0]->data();
          for (std::size_t i = 0; i < gd.size(); ++i) d[i] += gd[i];
        }
        if (gi[1]) {
          auto d = gi[1]->data();
          for (std::size_t i = 0; i < gd.size(); ++i) {
            d[mode == Broadcast::kSame ? i : i % cols] += sign * gd[i];
          }
        }
      });
}

}  // namespace

Var add(Var a, Var b) { return add_or_sub(a, b, 1.0, "add"); }
Var sub(Var a, Var b) { return add_or_sub(a, b, -1.0, "sub"); }

Var mul(Var a, Var b) {
  require_same_tape(a, b, "mul");
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.shape() != bv.shape()) shape_mismatch("mul", av.shape(), bv.shape());
  Tensor out = av;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  const std::size_t ia = a.id, ib = b.id;
  return a.tape->record(
      "mul", std::move(out), {a, b},
      [ia, ib](const Tape& t, const Tensor& go, std::span<Tensor* const> gi) {
        Tape* tp = const_cast<Tape*>(&t);
        const Tensor& A = t.value(Var{tp, ia});
        const Tensor& B = t.value(Var{tp, ib});
        for (std::size_t i = 0; i < go.size(); ++i) {
          if (gi[0]) (*gi[0])[i] += go[i] * B[i];
          if (gi[1]) (*gi[1])[i] += go[i] * A[i];
        }
      });
}

Var scale(Var a, double factor) {
  Tensor out = map_values(a.value(), [factor](double x) { return factor * x; });
  return a.tape->record("scale", std::move(out), {a},
                        [factor](const Tape&, const Tensor& go, std::span<Tensor* const> gi) {
                          for (std::size_t i = 0; i < go.size(); ++i) {
                            (*gi[0])[i] += factor * go[i];
                          }
                        });
}

namespace {

// Elementwise op whose local derivative depends on input x and output y.
template <typename Fwd, typename Deriv>
Var elementwise(Var a, std::string_view op, Fwd fwd, Deriv deriv) {
  Tensor out = map_values(a.value(), fwd);
  const std::size_t ia = a.id;
  const std::size_t io = a.tape->size();
  return a.tape->record(
      op, std::move(out), {a},
      [ia, io, deriv](const Tape& t, const Tensor& go, std::span<Tensor* const> gi) {
        Tape* tp = const_cast<Tape*>(&t);
        const Tensor& x = t.value(Var{tp, ia});
        const Tensor& y = t.value(Var{tp, io});
        for (std::size_t i = 0; i < go.size(); ++i) (*gi[0])[i] += go[i] * deriv(x[i], y[i]);
      });
}

}  // namespace

Var relu(Var a) {
  return elementwise(
      a, "relu", [](double x) { return x > 0 ? x : 0.0; },
      [](double x, double) { return x > 0 ? 1.0 : 0.0; });
}

Var tanh(Var a) {
  return elementwise(
      a, "tanh", [](double x) { return std::tanh(x); },
      [](double, double y) { return 1.0 - y * y; });
}

Var sigmoid(Var a) {
  return elementwise(a, "sigmoid", logistic, [](double, double y) { return y * (1.0 - y); });
}

Var hard_sigmoid(Var a, double slope) {
  if (!(slope > 0) || !std::isfinite(slope)) {
    throw std::invalid_argument("hard_sigmoid: slope must be positive and finite");
  }
  return elementwise(
      a, "hard_sigmoid",
      [slope](double x) { return std::clamp(slope * x + 0.5, 0.0, 1.0); },
      [slope](double x, double) {
        const double u = slope * x + 0.5;
        return (u > 0.0 && u < 1.0) ? slope : 0.0;
      });
}

Var clamp(Var a, double lo, double hi) {
  if (!(lo <= hi)) throw std::invalid_argument("clamp: lo must not exceed hi");
  return elementwise(
      a, "clamp", [lo, hi](double x) { return std::clamp(x, lo, hi); },
      [lo, hi](double x, double) { return (x > lo && x < hi) ? 1.0 : 0.0; });
}

Var log(Var a) {
  for (double v : a.value().data()) {
    if (!(v > 0)) throw NumericError("log: argument must be positive, got " + std::to_string(v));
  }
  return elementwise(
      a, "log", [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Tensor softmax_rows(const Tensor& logits) {
  Tensor out(logits.shape());
  const std::size_t r = logits.rows(), c = logits.cols();
  for (std::size_t i = 0; i < r; ++i) {
    const double* x = logits.data().data() + i * c;
    double* y = out.data().data() + i * c;
    const double mx = *std::max_element(x, x + c);
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j) z += (y[j] = std::exp(x[j] - mx));
    for (std::size_t j = 0; j < c; ++j) y[j] /= z;
  }
  return out;
}

Var softmax(Var a) {
  Tensor out = softmax_rows(a.value());
  const std::size_t io = a.tape->size();
  const std::size_t c = a.value().cols();
  return a.tape->record(
      "softmax", std::move(out), {a},
      [io, c](const Tape& t, const Tensor& go, std::span<Tensor* const> gi) {
        const Tensor& y = t.value(Var{const_cast<Tape*>(&t), io});
        for (std::size_t r = 0; r < y.rows(); ++r) {
          double dot = 0.0;
          for (std::size_t j = 0; j < c; ++j) dot += go[r * c + j] * y[r * c + j];
          for (std::size_t j = 0; j < c; ++j) {
            (*gi[0])[r * c + j] += y[r * c + j] * (go[r * c + j] - dot);
          }
        }
      });
}

Var sum(Var a) {
  const auto d = a.value().data();
  double s = 0.0;
  for (double v : d) s += v;
  return a.tape->record("sum", Tensor::scalar(s), {a},
                        [](const Tape&, const Tensor& go, std::span<Tensor* const> gi) {
                          for (double& v : gi[0]->data()) v += go[0];
                        });
}

Var mean(Var a) {
  const auto d = a.value().data();
  double s = 0.0;
  for (double v : d) s += v;
  const double n = static_cast<double>(d.size());
  return a.tape->record("mean", Tensor::scalar(s / n), {a},
                        [n](const Tape&, const Tensor& go, std::span<Tensor* const> gi) {
                          for (double& v : gi[0]->data()) v += go[0] / n;
                        });
}

Var row_pnorm(Var a, int p) {
  if (p != 1 && p != 2) throw std::invalid_argument("row_pnorm: p must be 1 or 2");
  const Tensor& x = a.value();
  const std::size_t r = x.rows(), c = x.cols();
  Tensor out = Tensor::matrix(r, 1);
  for (std::size_t i = 0; i < r; ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      const double v = x.at(i, j);
      acc += p == 1 ? std::abs(v) : v * v;
    }
    out[i] = p == 1 ? acc : std::sqrt(acc);
  }
  const std::size_t ia = a.id, io = a.tape->size();
  return a.tape->record(
      p == 1 ? "l1_norm" : "l2_norm", std::move(out), {a},
      [ia, io, p, c](const Tape& t, const Tensor& go, std::span<Tensor* const> gi) {
        Tape* tp = const_cast<Tape*>(&t);
        const Tensor& xv = t.value(Var{tp, ia});
        const Tensor& nv = t.value(Var{tp, io});
        for (std::size_t i = 0; i < xv.rows(); ++i) {
          for (std::size_t j = 0; j < c; ++j) {
            const double v = xv[i * c + j];
            double d;
            if (p == 1) {
              d = v > 0 ? 1.0 : (v < 0 ? -1.0 : 0.0);
            } else {
              d = nv[i] > 0 ? v / nv[i] : 0.0;  // subgradient 0 at the origin
            }
            (*gi[0])[i * c + j] += go[i] * d;
          }
        }
      });
}

Var bce_with_logits(Var logits, const Tensor& targets) {
  const Tensor& x = logits.value();
  if (x.shape() != targets.shape()) {
    shape_mismatch("bce_with_logits", x.shape(), targets.shape());
  }
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) s += softplus(x[i]) - targets[i] * x[i];
  const double n = static_cast<double>(x.size());
  const std::size_t ix = logits.id;
  return logits.tape->record(
      "bce_with_logits", Tensor::scalar(s / n), {logits},
      [ix, targets, n](const Tape& t, const Tensor& go, std::span<Tensor* const> gi) {
        const Tensor& xv = t.value(Var{const_cast<Tape*>(&t), ix});
        for (std::size_t i = 0; i < xv.size(); ++i) {
          (*gi[0])[i] += go[0] * (logistic(xv[i]) - targets[i]) / n;
        }
      });
}

Var cross_entropy_with_logits(Var logits, std::span<const std::size_t> labels) {
  const Tensor& x = logits.value();
  const std::size_t r = x.rows(), c = x.cols();
  if (labels.size() != r) {
    throw ShapeError("cross_entropy_with_logits: " + std::to_string(labels.size()) +
                     " labels for logits of shape " + shape_str(x.shape()));
  }
  for (std::size_t l : labels) {
    if (l >= c) {
      throw std::out_of_range("cross_entropy_with_logits: label " + std::to_string(l) +
                              " outside [0, " + std::to_string(c) + ")");
    }
  }
  Tensor probs = softmax_rows(x);
  double s = 0.0;
  for (std::size_t i = 0; i < r; ++i) {
    const double* row = x.data().data() + i * c;
    const double mx = *std::max_element(row, row + c);
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j) z += std::exp(row[j] - mx);
    s += mx + std::log(z) - row[labels[i]];
  }
  const double n = static_cast<double>(r);
  std::vector<std::size_t> lab(labels.begin(), labels.end());
  return logits.tape->record(
      "cross_entropy", Tensor::scalar(s / n), {logits},
      [probs = std::move(probs), lab = std::move(lab), n, c](
          const Tape&, const Tensor& go, std::span<Tensor* const> gi) {
        for (std::size_t i = 0; i < lab.size(); ++i) {
          for (std::size_t j = 0; j < c; ++j) {
            const double target = j == lab[i] ? 1.0 : 0.0;
            (*gi[0])[i * c + j] += go[0] * (probs[i * c + j] - target) / n;
          }
        }
      });
}

GradCheckResult grad_check(const ScalarFunction& fn, const std::vector<Tensor>& params,
                           const GradCheckOptions& options) {
  auto evaluate = [&](const std::vector<Tensor>& at) {
    Tape tape;
    std::vector<Var> vars;
    vars.reserve(at.size());
    for (const Tensor& p : at) vars.push_back(tape.leaf(p, true));
    const double v = fn(tape, vars).value().item();
    return v;
  };

  Tape tape;
  std::vector<Var> vars;
  for (const Tensor& p : params) vars.push_back(tape.leaf(p, true));
  Var loss = fn(tape, vars);
  const Gradients grads = tape.backward(loss);

  GradCheckResult result;
  std::mt19937_64 rng(options.seed);
  std::vector<Tensor> probe = params;
  for (std::size_t t = 0; t < params.size(); ++t) {
    std::vector<std::size_t> coords(params[t].size());
    std::iota(coords.begin(), coords.end(), 0);
    if (options.max_coords_per_tensor > 0 && coords.size() > options.max_coords_per_tensor) {
      std::shuffle(coords.begin(), coords.end(), rng);
      coords.resize(options.max_coords_per_tensor);
      std::sort(coords.begin(), coords.end());
    }
    for (std::size_t i : coords) {
      const double orig = params[t][i];
      double plus, minus;
      probe[t][i] = orig + options.step;
      try {
        plus = evaluate(probe);
        probe[t][i] = orig - options.step;
        minus = evaluate(probe);
      } catch (const NumericError& e) {
        throw NumericError("grad_check: non-finite evaluation probing tensor " +
                           std::to_string(t) + " coordinate " + std::to_string(i) + ": " +
                           e.what());
      }
      probe[t][i] = orig;
      if (!std::isfinite(plus) || !std::isfinite(minus)) {
        throw NumericError("grad_check: non-finite evaluation probing tensor " +
                           std::to_string(t) + " coordinate " + std::to_string(i));
      }
      const double fd = (plus - minus) / (2.0 * options.step);
      const double ad = grads[vars[t]][i];
      const double err = std::abs(ad - fd) / std::max(1.0, std::abs(fd));
      ++result.probes;
      if (err > result.max_relative_error) {
        result.max_relative_error = err;
        result.worst_tensor = t;
        result.worst_index = i;
      }
    }
  }
  result.passed = result.max_relative_error < options.tolerance;
  return result;
}

}  // namespace nemgan::ad
