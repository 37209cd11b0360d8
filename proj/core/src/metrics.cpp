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

#include "nemgan/metrics.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "nemgan/objectives.hpp"

namespace nemgan::metrics {

namespace {

void check_labels(std::span<const std::size_t> t, std::span<const std::size_t> p) {
  if (t.empty()) throw std::invalid_argument("clustering metric: empty input");
  if (t.size() != p.size()) {
    throw std::invalid_argument("clustering metric: " + std::to_string(t.size()) +
                                " true labels vs " + std::to_string(p.size()) + " predictions");
  }
}

double choose2(double n) { return n * (n - 1.0) / 2.0; }

using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Mat as_mat(std::span<const double> v, std::size_t dim) {
  Mat m(dim, dim);
  for (std::size_t i = 0; i < dim; ++i) {
    for (std::size_t j = 0; j < dim; ++j) m(i, j) = v[i * dim + j];
  }
  return m;
}

void moments(const ad::Tensor& x, std::vector<double>& mu, std::vector<double>& cov) {
  const std::size_t n = x.rows(), d = x.cols();
  if (n < d + 1) {
    throw std::invalid_argument("frechet_gaussian: need at least dim + 1 samples, got " +
                                std::to_string(n));
  }
  mu.assign(d, 0.0);
  cov.assign(d * d, 0.0);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < d; ++c) mu[c] += x.at(r, c);
  }
  for (double& v : mu) v /= static_cast<double>(n);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t i = 0; i < d; ++i) {
      const double di = x.at(r, i) - mu[i];
      for (std::size_t j = 0; j < d; ++j) cov[i * d + j] += di * (x.at(r, j) - mu[j]);
    }
  }
  for (double& v : cov) v /= static_cast<double>(n - 1);
}

// Eigenvalues below the floor are treated as zero.
constexpr double kEigenFloor = 1e-10;

Mat psd_sqrt(const Mat& m) {
  Eigen::SelfAdjointEigenSolver<Mat> es(m);
  Eigen::VectorXd ev = es.eigenvalues();
  for (Eigen::Index i = 0; i < ev.size(); ++i) ev[i] = ev[i] > kEigenFloor ? std::sqrt(ev[i]) : 0.0;
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace

ContingencyTable contingency(std::span<const std::size_t> true_labels,
                             std::span<const std::size_t> pred_labels, std::size_t min_true,
                             std::size_t min_pred) {
  check_labels(true_labels, pred_labels);
  ContingencyTable t{min_true, min_pred, {}, 0};
  for (std::size_t v : true_labels) t.k_true = std::max(t.k_true, v + 1);
  for (std::size_t v : pred_labels) t.k_pred = std::max(t.k_pred, v + 1);
  t.counts.assign(t.k_true * t.k_pred, 0);
  for (std::size_t i = 0; i < true_labels.size(); ++i) {
    ++t.counts[true_labels[i] * t.k_pred + pred_labels[i]];
  }
  t.total = true_labels.size();
  return t;
}

std::vector<std::size_t> solve_assignment(std::span<const double> cost, std::size_t n) {
  // Shortest augmenting path with row/column potentials, O(n^3).
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), minv(n + 1);
  std::vector<std::size_t> p(n + 1, 0), way(n + 1, 0);
  std::vector<bool> used(n + 1);
  for (std::size_t i = 1; i <= n; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    std::fill(minv.begin(), minv.end(), inf);
    std::fill(used.begin(), used.end(), false);
    do {
      used[j0] = true;
      const std::size_t i0 = p[j0];
      double delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost[(i0 - 1) * n + (j - 1)] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<std::size_t> row_to_col(n);
  for (std::size_t j = 1; j <= n; ++j) row_to_col[p[j] - 1] = j - 1;
  return row_to_col;
}

std::vector<std::size_t> best_matching(const ContingencyTable& table) {
  const std::size_t n = std::max(table.k_true, table.k_pred);
  // rows: predicted clusters, columns: true classes; padding costs 0
  std::vector<double> cost(n * n, 0.0);
  for (std::size_t p = 0; p < table.k_pred; ++p) {
    for (std::size_t t = 0; t < table.k_true; ++t) {
      cost[p * n + t] = -static_cast<double>(table.at(t, p));
    }
  }
  const std::vector<std::size_t> assign = solve_assignment(cost, n);
  std::vector<std::size_t> out(table.k_pred, kUnmatched);
  for (std::size_t p = 0; p < table.k_pred; ++p) {
    if (assign[p] < table.k_true) out[p] = assign[p];
  }
  return out;
}

double clustering_accuracy(std::span<const std::size_t> true_labels,
                           std::span<const std::size_t> pred_labels) {
  const ContingencyTable t = contingency(true_labels, pred_labels);
  const std::vector<std::size_t> match = best_matching(t);
  std::size_t hits = 0;
  for (std::size_t p = 0; p < t.k_pred; ++p) {
    if (match[p] != kUnmatched) hits += t.at(match[p], p);
  }
  return static_cast<double>(hits) / static_cast<double>(t.total);
}

double nmi(std::span<const std::size_t> true_labels, std::span<const std::size_t> pred_labels) {
  const ContingencyTable t = contingency(true_labels, pred_labels);
  const double n = static_cast<double>(t.total);
  std::vector<double> a(t.k_true, 0.0), b(t.k_pred, 0.0);
  for (std::size_t i = 0; i < t.k_true; ++i) {
    for (std::size_t j = 0; j < t.k_pred; ++j) {
      a[i] += static_cast<double>(t.at(i, j));
      b[j] += static_cast<double>(t.at(i, j));
    }
  }
  auto entropy = [n](const std::vector<double>& c) {
    double h = 0.0;
    for (double v : c) {
      if (v > 0) h -= (v / n) * std::log(v / n);
    }
    return h;
  };
  const double ht = entropy(a), hp = entropy(b);
  if (ht <= 0.0 || hp <= 0.0) return 0.0;
  double mi = 0.0;
  for (std::size_t i = 0; i < t.k_true; ++i) {
    for (std::size_t j = 0; j < t.k_pred; ++j) {
      const double c = static_cast<double>(t.at(i, j));
      if (c > 0) mi += (c / n) * std::log(c * n / (a[i] * b[j]));
    }
  }
  return std::clamp(mi / std::sqrt(ht * hp), 0.0, 1.0);
}

double ari(std::span<const std::size_t> true_labels, std::span<const std::size_t> pred_labels) {
  const ContingencyTable t = contingency(true_labels, pred_labels);
  std::vector<double> a(t.k_true, 0.0), b(t.k_pred, 0.0);
  double index = 0.0;
  for (std::size_t i = 0; i < t.k_true; ++i) {
    for (std::size_t j = 0; j < t.k_pred; ++j) {
      const double c = static_cast<double>(t.at(i, j));
      index += choose2(c);
      a[i] += c;
      b[j] += c;
    }
  }
  double sa = 0.0, sb = 0.0;
  for (double v : a) sa += choose2(v);
  for (double v : b) sb += choose2(v);
  const double pairs = choose2(static_cast<double>(t.total));
  const double expected = pairs > 0 ? sa * sb / pairs : 0.0;
  const double max_index = 0.5 * (sa + sb);
  const double denom = max_index - expected;
  if (denom == 0.0) return index == expected ? 1.0 : 0.0;
  return (index - expected) / denom;
}

Coverage mode_coverage(const ad::Tensor& generated, const data::MixtureSpec& spec,
                       std::span<const double> target_prior,
                       std::optional<std::size_t> min_count) {
  const std::size_t k = spec.components();
  if (target_prior.size() != k) {
    throw std::invalid_argument("mode_coverage: target prior has " +
                                std::to_string(target_prior.size()) + " entries for " +
                                std::to_string(k) + " modes");
  }
  const std::size_t n = generated.rows();
  Coverage out;
  out.threshold = min_count.value_or(std::max<std::size_t>(
      1, static_cast<std::size_t>(0.2 * static_cast<double>(n) / static_cast<double>(k))));
  if (out.threshold < 1) throw std::invalid_argument("mode_coverage: min_count must be >= 1");
  out.counts.assign(k, 0);
  for (std::size_t label : data::oracle_mode_assign(generated, spec)) ++out.counts[label];
  std::vector<double> hist(k);
  for (std::size_t i = 0; i < k; ++i) {
    hist[i] = static_cast<double>(out.counts[i]) / static_cast<double>(n);
    if (out.counts[i] >= out.threshold) ++out.modes_covered;
  }
  out.histogram_kl = obj::kl_divergence(hist, target_prior);
  return out;
}

double trace_sqrt_product(std::span<const double> a, std::span<const double> b,
                          std::size_t dim) {
  const Mat sa = psd_sqrt(as_mat(a, dim));
  const Mat inner = sa * as_mat(b, dim) * sa;
  Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (inner + inner.transpose()),
                                        Eigen::EigenvaluesOnly);
  double tr = 0.0;
  for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i) {
    const double ev = es.eigenvalues()[i];
    if (ev > kEigenFloor) tr += std::sqrt(ev);
  }
  return tr;
}

double frechet_from_moments(std::span<const double> mu1, std::span<const double> cov1,
                            std::span<const double> mu2, std::span<const double> cov2,
                            std::size_t dim) {
  double mean_term = 0.0, trace = 0.0;
  for (std::size_t i = 0; i < dim; ++i) {
    const double d = mu1[i] - mu2[i];
    mean_term += d * d;
    trace += cov1[i * dim + i] + cov2[i * dim + i];
  }
  double cross;
  if (dim == 2) {
    // eigenvalues of A B are real and non-negative: tr sqrt = sqrt(tr + 2 sqrt(det))
    const double p00 = cov1[0] * cov2[0] + cov1[1] * cov2[2];
    const double p01 = cov1[0] * cov2[1] + cov1[1] * cov2[3];
    const double p10 = cov1[2] * cov2[0] + cov1[3] * cov2[2];
    const double p11 = cov1[2] * cov2[1] + cov1[3] * cov2[3];
    const double det = std::max(0.0, p00 * p11 - p01 * p10);
    const double tr = std::max(0.0, p00 + p11);
    cross = std::sqrt(tr + 2.0 * std::sqrt(det));
  } else {
    cross = trace_sqrt_product(cov1, cov2, dim);
  }
  return std::max(0.0, mean_term + trace - 2.0 * cross);
}

double frechet_gaussian(const ad::Tensor& real, const ad::Tensor& generated) {
  if (real.cols() != generated.cols()) {
    throw ad::ShapeError("frechet_gaussian: widths differ " + ad::shape_str(real.shape()) +
                         " vs " + ad::shape_str(generated.shape()));
  }
  std::vector<double> mu1, cov1, mu2, cov2;
  moments(real, mu1, cov1);
  moments(generated, mu2, cov2);
  return frechet_from_moments(mu1, cov1, mu2, cov2, real.cols());
}

std::vector<std::size_t> argmax_rows(const ad::Tensor& rows) {
  std::vector<std::size_t> out(rows.rows());
  for (std::size_t r = 0; r < rows.rows(); ++r) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < rows.cols(); ++c) {
      if (rows.at(r, c) > rows.at(r, best)) best = c;
    }
    out[r] = best;
  }
  return out;
}

double PosteriorConsistency::gap() const { return std::abs(kl_posterior - kl_oracle); }

PosteriorConsistency posterior_consistency(const ad::Tensor& posterior_rows,
                                           std::span<const std::size_t> oracle_labels,
                                           std::span<const double> prior) {
  const std::size_t m = posterior_rows.cols();
  if (prior.size() != m) {
    throw std::invalid_argument("posterior_consistency: prior length does not match posterior");
  }
  const std::vector<std::size_t> pred = argmax_rows(posterior_rows);
  ContingencyTable t = contingency(oracle_labels, pred, 0, m);
  const std::vector<std::size_t> match = best_matching(t);

  PosteriorConsistency out;
  std::size_t hits = 0;
  std::vector<double> hist(m, 0.0);
  for (std::size_t p = 0; p < t.k_pred; ++p) {
    if (match[p] == kUnmatched) continue;
    hits += t.at(match[p], p);
    double mass = 0.0;
    for (std::size_t q = 0; q < t.k_pred; ++q) mass += static_cast<double>(t.at(match[p], q));
    hist[p] = mass / static_cast<double>(t.total);
  }
  out.inverter_acc = static_cast<double>(hits) / static_cast<double>(t.total);
  out.kl_posterior = obj::kl_divergence(obj::aggregate_posterior(posterior_rows).probs, prior);
  out.kl_oracle = obj::kl_divergence(hist, prior);
  return out;
}

}  // namespace nemgan::metrics
