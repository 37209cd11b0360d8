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

#include "nemgan/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>

namespace nemgan::data {

namespace {

void check_simplex(std::span<const double> w) {
  double s = 0.0;
  for (double v : w) {
    if (!(v >= 0.0) || !std::isfinite(v)) {
      throw std::invalid_argument("mixture weights must be finite and non-negative");
    }
    s += v;
  }
  if (std::abs(s - 1.0) > 1e-9) {
    throw std::invalid_argument("mixture weights must sum to 1, got " + std::to_string(s));
  }
}

MixtureSpec uniform_spec(ad::Tensor means, double std) {
  MixtureSpec spec;
  const std::size_t k = means.rows();
  spec.dim = means.cols();
  spec.means = std::move(means);
  spec.stds.assign(k, std);
  spec.weights.assign(k, 1.0 / static_cast<double>(k));
  spec.validate();
  return spec;
}

}  // namespace

void MixtureSpec::validate() const {
  const std::size_t k = components();
  if (k < 1 || dim < 1) throw std::invalid_argument("mixture needs >= 1 component and dim >= 1");
  if (means.rows() != k || means.cols() != dim || stds.size() != k) {
    throw std::invalid_argument("mixture arrays disagree on component count");
  }
  check_simplex(weights);
  for (double s : stds) {
    if (!(s > 0.0) || !std::isfinite(s)) {
      throw std::invalid_argument("mixture stds must be positive");
    }
  }
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = i + 1; j < k; ++j) {
      bool same = true;
      for (std::size_t c = 0; c < dim && same; ++c) same = means.at(i, c) == means.at(j, c);
      if (same) {
        throw std::invalid_argument("mixture means " + std::to_string(i) + " and " +
                                    std::to_string(j) + " coincide");
      }
    }
  }
}

MixtureSpec make_ring(std::size_t k, double radius, double std) {
  if (k < 1 || !(radius > 0.0)) throw std::invalid_argument("make_ring: k and radius must be positive");
  ad::Tensor means = ad::Tensor::matrix(k, 2);
  for (std::size_t i = 0; i < k; ++i) {
    const double t = 2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(k);
    means.at(i, 0) = radius * std::cos(t);
    means.at(i, 1) = radius * std::sin(t);
  }
  return uniform_spec(std::move(means), std);
}

MixtureSpec make_grid(std::size_t m, double spacing, double std) {
  if (m < 1 || !(spacing > 0.0)) throw std::invalid_argument("make_grid: m and spacing must be positive");
  ad::Tensor means = ad::Tensor::matrix(m * m, 2);
  const double offset = 0.5 * static_cast<double>(m - 1);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      means.at(i * m + j, 0) = (static_cast<double>(i) - offset) * spacing;
      means.at(i * m + j, 1) = (static_cast<double>(j) - offset) * spacing;
    }
  }
  return uniform_spec(std::move(means), std);
}

MixtureSpec make_skewed(MixtureSpec base, std::vector<double> weights) {
  if (weights.size() != base.components()) {
    throw std::invalid_argument("make_skewed: " + std::to_string(weights.size()) +
                                " weights for " + std::to_string(base.components()) +
                                " components");
  }
  check_simplex(weights);
  base.weights = std::move(weights);
  base.validate();
  return base;
}

MixtureSpec make_factored(std::size_t factors, std::size_t levels, double radius, double std) {
  if (factors < 1 || levels < 1) {
    throw std::invalid_argument("make_factored: factors and levels must be positive");
  }
  const MixtureSpec ring = make_ring(levels, radius, std);
  std::size_t k = 1;
  for (std::size_t f = 0; f < factors; ++f) k *= levels;
  ad::Tensor means = ad::Tensor::matrix(k, 2 * factors);
  for (std::size_t c = 0; c < k; ++c) {
    std::size_t rest = c;
    for (std::size_t f = 0; f < factors; ++f) {
      const std::size_t level = rest % levels;
      rest /= levels;
      means.at(c, 2 * f) = ring.means.at(level, 0);
      means.at(c, 2 * f + 1) = ring.means.at(level, 1);
    }
  }
  return uniform_spec(std::move(means), std);
}

Samples sample_component(const MixtureSpec& spec, std::size_t component, std::size_t n,
                         std::mt19937_64& rng) {
  Samples out{ad::Tensor::matrix(std::max<std::size_t>(n, 1), spec.dim), {}};
  std::normal_distribution<double> normal(0.0, 1.0);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < spec.dim; ++c) {
      out.x.at(r, c) = spec.means.at(component, c) + spec.stds[component] * normal(rng);
    }
  }
  out.labels.assign(n, component);
  return out;
}

Samples sample_mixture(const MixtureSpec& spec, std::size_t n, std::uint64_t seed) {
  spec.validate();
  if (n < 1) throw std::invalid_argument("sample_mixture: n must be >= 1");
  std::mt19937_64 rng(seed);
  std::discrete_distribution<std::size_t> pick(spec.weights.begin(), spec.weights.end());
  std::normal_distribution<double> normal(0.0, 1.0);
  Samples out{ad::Tensor::matrix(n, spec.dim), std::vector<std::size_t>(n)};
  for (std::size_t r = 0; r < n; ++r) {
    const std::size_t k = pick(rng);
    out.labels[r] = k;
    for (std::size_t c = 0; c < spec.dim; ++c) {
      out.x.at(r, c) = spec.means.at(k, c) + spec.stds[k] * normal(rng);
    }
  }
  return out;
}

LabeledSubset draw_supervised_subset(std::span<const std::size_t> labels, double fraction,
                                     std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction <= 0.05)) {
    throw std::invalid_argument("labeled fraction must lie in (0, 0.05], got " +
                                std::to_string(fraction));
  }
  const std::size_t n = labels.size();
  const std::size_t count =
      std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(fraction * n)));
  std::mt19937_64 rng(seed);

  std::size_t k = 0;
  for (std::size_t l : labels) k = std::max(k, l + 1);
  std::vector<std::vector<std::size_t>> by_mode(k);
  for (std::size_t i = 0; i < n; ++i) by_mode[labels[i]].push_back(i);
  std::size_t non_empty = 0;
  for (const auto& v : by_mode) non_empty += v.empty() ? 0 : 1;

  std::vector<bool> taken(n, false);
  std::vector<std::size_t> chosen;
  if (count >= non_empty) {
    for (const auto& v : by_mode) {
      if (v.empty()) continue;
      std::uniform_int_distribution<std::size_t> u(0, v.size() - 1);
      const std::size_t i = v[u(rng)];
      taken[i] = true;
      chosen.push_back(i);
    }
  }
  std::vector<std::size_t> rest;
  rest.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (!taken[i]) rest.push_back(i);
  }
  std::shuffle(rest.begin(), rest.end(), rng);
  for (std::size_t i = 0; chosen.size() < count && i < rest.size(); ++i) chosen.push_back(rest[i]);
  std::sort(chosen.begin(), chosen.end());

  LabeledSubset out;
  out.indices = std::move(chosen);
  for (std::size_t i : out.indices) out.labels.push_back(labels[i]);
  out.fraction = static_cast<double>(out.indices.size()) / static_cast<double>(n);
  return out;
}

std::vector<std::size_t> oracle_mode_assign(const ad::Tensor& x, const MixtureSpec& spec) {
  if (x.cols() != spec.dim) {
    throw ad::ShapeError("oracle_mode_assign: samples have width " + std::to_string(x.cols()) +
                         ", mixture dim is " + std::to_string(spec.dim));
  }
  const std::size_t k = spec.components();
  std::vector<double> bias(k);
  for (std::size_t j = 0; j < k; ++j) {
    bias[j] = (spec.weights[j] > 0 ? std::log(spec.weights[j])
                                   : -std::numeric_limits<double>::infinity()) -
              static_cast<double>(spec.dim) * std::log(spec.stds[j]);
  }
  std::vector<std::size_t> out(x.rows());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    std::size_t best = 0;
    double best_ll = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < k; ++j) {
      double d2 = 0.0;
      for (std::size_t c = 0; c < spec.dim; ++c) {
        const double d = x.at(r, c) - spec.means.at(j, c);
        d2 += d * d;
      }
      const double ll = bias[j] - d2 / (2.0 * spec.stds[j] * spec.stds[j]);
      if (ll > best_ll) {
        best_ll = ll;
        best = j;
      }
    }
    out[r] = best;
  }
  return out;
}

Samples rows(const Samples& s, std::span<const std::size_t> indices) {
  Samples out{ad::Tensor::matrix(std::max<std::size_t>(indices.size(), 1), s.x.cols()), {}};
  for (std::size_t r = 0; r < indices.size(); ++r) {
    for (std::size_t c = 0; c < s.x.cols(); ++c) out.x.at(r, c) = s.x.at(indices[r], c);
    out.labels.push_back(s.labels[indices[r]]);
  }
  return out;
}

Samples balanced_resample(const MixtureSpec& spec, const Samples& pool, std::size_t per_mode,
                          std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const std::size_t k = spec.components();
  std::vector<std::vector<std::size_t>> by_mode(k);
  for (std::size_t i = 0; i < pool.size(); ++i) by_mode[pool.labels[i]].push_back(i);
  Samples out{ad::Tensor::matrix(k * per_mode, spec.dim), {}};
  out.labels.reserve(k * per_mode);
  std::size_t r = 0;
  for (std::size_t m = 0; m < k; ++m) {
    if (by_mode[m].empty()) {
      Samples fresh = sample_component(spec, m, per_mode, rng);
      for (std::size_t i = 0; i < per_mode; ++i, ++r) {
        for (std::size_t c = 0; c < spec.dim; ++c) out.x.at(r, c) = fresh.x.at(i, c);
        out.labels.push_back(m);
      }
      continue;
    }
    std::uniform_int_distribution<std::size_t> u(0, by_mode[m].size() - 1);
    for (std::size_t i = 0; i < per_mode; ++i, ++r) {
      const std::size_t src = by_mode[m][u(rng)];
      for (std::size_t c = 0; c < spec.dim; ++c) out.x.at(r, c) = pool.x.at(src, c);
      out.labels.push_back(m);
    }
  }
  return out;
}

Dataset make_dataset(const MixtureSpec& spec, std::size_t n, std::size_t per_mode,
                     std::uint64_t seed) {
  if (n < 5) throw std::invalid_argument("make_dataset: need at least 5 samples");
  Samples all = sample_mixture(spec, n, seed);
  const std::size_t n_train = n * 4 / 5;
  std::vector<std::size_t> train_idx(n_train), test_idx(n - n_train);
  std::iota(train_idx.begin(), train_idx.end(), 0);
  std::iota(test_idx.begin(), test_idx.end(), n_train);
  Dataset ds;
  ds.spec = spec;
  ds.train = rows(all, train_idx);
  ds.test = rows(all, test_idx);
  ds.balanced_test = balanced_resample(spec, ds.test, per_mode, seed ^ 0x9e3779b97f4a7c15ull);
  return ds;
}

void write_csv(const std::filesystem::path& path, const Samples& samples) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  const std::size_t d = samples.x.cols();
  for (std::size_t c = 0; c < d; ++c) os << "x_" << c << ',';
  os << "label\n";
  char buf[32];
  for (std::size_t r = 0; r < samples.size(); ++r) {
    for (std::size_t c = 0; c < d; ++c) {
      std::snprintf(buf, sizeof buf, "%.17g", samples.x.at(r, c));
      os << buf << ',';
    }
    os << samples.labels[r] << '\n';
  }
}

Samples read_csv(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot read " + path.string());
  std::string line;
  if (!std::getline(is, line)) throw std::runtime_error(path.string() + ": missing header");
  const std::size_t cols = static_cast<std::size_t>(std::count(line.begin(), line.end(), ','));
  if (cols == 0 || line.substr(line.rfind(',') + 1) != "label") {
    throw std::runtime_error(path.string() + ": header must be x_0..x_{d-1},label");
  }
  std::vector<double> values;
  std::vector<std::size_t> labels;
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::size_t seen = 0;
    while (std::getline(ss, cell, ',')) {
      try {
        if (seen < cols) {
          values.push_back(std::stod(cell));
        } else {
          labels.push_back(static_cast<std::size_t>(std::stoull(cell)));
        }
      } catch (const std::exception&) {
        throw std::runtime_error(path.string() + ":" + std::to_string(lineno) +
                                 ": bad value '" + cell + "'");
      }
      ++seen;
    }
    if (seen != cols + 1) {
      throw std::runtime_error(path.string() + ":" + std::to_string(lineno) +
                               ": expected " + std::to_string(cols + 1) + " columns");
    }
  }
  if (labels.empty()) throw std::runtime_error(path.string() + ": no rows");
  const std::size_t n = labels.size();
  return Samples{ad::Tensor({n, cols}, std::move(values)), std::move(labels)};
}

}  // namespace nemgan::data
