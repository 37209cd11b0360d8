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
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

// Dense 64-bit tensors with a define-by-run reverse-mode tape.

namespace nemgan::ad {

using Shape = std::vector<std::size_t>;

std::string shape_str(const Shape& shape);

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> data);

  static Tensor scalar(double v) { return Tensor({1, 1}, {v}); }
  static Tensor matrix(std::size_t rows, std::size_t cols, double fill = 0.0) {
    return Tensor({rows, cols}, fill);
  }
  static Tensor row(std::vector<double> values);
  static Tensor column(std::vector<double> values);

  const Shape& shape() const { return shape_; }
  std::size_t size() const { return data_.size(); }
  // Rank-1 tensors are viewed as a single row; higher ranks fold leading axes.
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<const double> data() const { return data_; }
  std::span<double> data() { return data_; }
  const std::vector<double>& vec() const { return data_; }

  double operator[](std::size_t i) const { return data_[i]; }
  double& operator[](std::size_t i) { return data_[i]; }
  double at(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }
  double& at(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }

  double item() const;
  bool all_finite() const;

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  Shape shape_;
  std::vector<double> data_;
};

class Tape;

// Handle to a node recorded on a tape. Cheap to copy.
struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
};

class Gradients {
 public:
  bool contains(Var v) const;
  const Tensor& operator[](Var v) const;
  std::size_t size() const { return count_; }

 private:
  friend class Tape;
  std::vector<Tensor> grads_;
  std::vector<bool> present_;
  std::size_t count_ = 0;
};

class Tape {
 public:
  // Accumulates the adjoint of one recorded op into the gradients of its
  // inputs. in_grads[i] is null when input i does not require a gradient.
  using Adjoint = std::function<void(const Tape& tape, const Tensor& out_grad,
                                     std::span<Tensor* const> in_grads)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var leaf(Tensor value, bool trainable);
  Var constant(Tensor value) { return leaf(std::move(value), false); }

  // Registers a primitive. The value must already be computed by the caller.
  Var record(std::string_view name, Tensor value, std::vector<Var> inputs,
             Adjoint adjoint);

  const Tensor& value(Var v) const;
  bool requires_grad(Var v) const;
  bool is_trainable(Var v) const;
  std::string_view op_name(Var v) const;
  std::size_t size() const { return nodes_.size(); }

  // Gradients of a scalar loss for every trainable leaf.
  Gradients backward(Var loss) const;

 private:
  struct Node {
    std::string name;
    Tensor value;
    std::vector<std::size_t> inputs;
    Adjoint adjoint;
    bool requires_grad = false;
    bool trainable = false;
  };

  const Node& node(Var v) const;

  std::vector<Node> nodes_;
};

// Forward primitives. Each registers its adjoint on the operands' tape.
Var matmul(Var a, Var b);
// b may match a's shape or be a single row broadcast over a's rows.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double factor);
Var relu(Var a);
Var tanh(Var a);
Var sigmoid(Var a);
// clamp(slope * t + 0.5, 0, 1)
Var hard_sigmoid(Var a, double slope);
Var softmax(Var a);
Var log(Var a);
// Adjoint is 1 strictly inside (lo, hi) and 0 elsewhere.
Var clamp(Var a, double lo, double hi);
Var mean(Var a);
Var sum(Var a);
// Row-wise p-norm (p in {1, 2}); returns a column of length rows().
Var row_pnorm(Var a, int p);
// Mean of softplus(x) - t*x over all entries.
Var bce_with_logits(Var logits, const Tensor& targets);
// Mean over rows of -log softmax(logits)[label].
Var cross_entropy_with_logits(Var logits, std::span<const std::size_t> labels);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }
inline Var operator*(double s, Var a) { return scale(a, s); }

// Plain tensor helpers used outside the tape.
Tensor softmax_rows(const Tensor& logits);
Tensor matmul(const Tensor& a, const Tensor& b);

struct GradCheckOptions {
  double step = 1e-5;
  double tolerance = 1e-4;
  // 0 probes every coordinate; otherwise a seeded subset per tensor.
  std::size_t max_coords_per_tensor = 0;
  unsigned long long seed = 0;
};

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::size_t worst_tensor = 0;
  std::size_t worst_index = 0;
  std::size_t probes = 0;
  bool passed = true;
};

using ScalarFunction = std::function<Var(Tape&, std::span<const Var>)>;

// Compares tape gradients with central differences. The error per coordinate
// is |autodiff - fd| / max(1, |fd|).
GradCheckResult grad_check(const ScalarFunction& fn, const std::vector<Tensor>& params,
                           const GradCheckOptions& options = {});

}  // namespace nemgan::ad
