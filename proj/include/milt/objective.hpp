// Copyright 2026 The milt Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

/// @file
/// The group-to-instance transfer objective and its analytic gradient.
///
/// For a logistic instance scorer y(x) = sigmoid(theta . x [+ bias]) and a
/// batch of groups,
///
///   J(theta) = sum_{i != j} w(i,j) (y_i - y_j)^2
///            + lambda * sum_g (mean_{i in g} y_i - s_g)^2
///
/// The first sum runs over ordered pairs, i.e. twice over the stored
/// unordered edges. Group means count duplicate members once per occurrence.

#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "milt/dataset.hpp"
#include "milt/error.hpp"
#include "milt/similarity.hpp"

namespace milt {

struct Theta {
  std::vector<double> weights;
  std::optional<double> bias;

  static Theta zeros(std::size_t dim, bool with_bias = false) {
    Theta t;
    t.weights.assign(dim, 0.0);
    if (with_bias) t.bias = 0.0;
    return t;
  }

  [[nodiscard]] std::size_t dim() const noexcept { return weights.size(); }
  [[nodiscard]] std::size_t num_params() const noexcept { return weights.size() + (bias ? 1 : 0); }

  /// Weights followed by the bias, when present.
  [[nodiscard]] std::vector<double> flatten() const {
    std::vector<double> out(weights);
    if (bias) out.push_back(*bias);
    return out;
  }

  static Theta unflatten(std::span<const double> params, bool with_bias) {
    Theta t;
    const std::size_t d = with_bias ? params.size() - 1 : params.size();
    t.weights.assign(params.begin(), params.begin() + static_cast<std::ptrdiff_t>(d));
    if (with_bias) t.bias = params.back();
    return t;
  }

  [[nodiscard]] bool finite() const {
    for (double w : weights) {
      if (!std::isfinite(w)) return false;
    }
    return !bias || std::isfinite(*bias);
  }

  friend bool operator==(const Theta&, const Theta&) = default;
};

/// Logistic function, branching on the sign of the logit so neither branch
/// overflows. Results that round to exactly 0 or 1 are nudged inward so the
/// score stays strictly inside (0, 1).
inline double sigmoid(double z) noexcept {
  double y = 0.0;
  if (z >= 0.0) {
    y = 1.0 / (1.0 + std::exp(-z));
  } else {
    const double e = std::exp(z);
    y = e / (1.0 + e);
  }
  if (y <= 0.0) return std::numeric_limits<double>::min();
  if (y >= 1.0) return 1.0 - std::numeric_limits<double>::epsilon() / 2.0;
  return y;
}

inline double logit(const Theta& theta, std::span<const double> x) {
  if (x.size() != theta.dim()) {
    throw error(errc::dimension_mismatch, "feature vector has " + std::to_string(x.size()) +
                                              " components, model expects " + std::to_string(theta.dim()));
  }
  double z = theta.bias.value_or(0.0);
  for (std::size_t k = 0; k < x.size(); ++k) z += theta.weights[k] * x[k];
  return z;
}

inline double predict_score(const Theta& theta, std::span<const double> x) { return sigmoid(logit(theta, x)); }

/// lambda = alpha * |I|^2 / |G|, which puts both terms of J on the same scale
/// (the pair sum is at most |I|^2 and the group sum at most |G|).
inline double lambda_from_alpha(double alpha, std::size_t n_instances, std::size_t n_groups) {
  if (n_groups == 0) throw error(errc::invalid_argument, "lambda_from_alpha needs at least one group");
  if (!(alpha >= 0.0) || !std::isfinite(alpha)) throw error(errc::invalid_argument, "alpha must be >= 0");
  const auto n = static_cast<double>(n_instances);
  return alpha * n * n / static_cast<double>(n_groups);
}

struct BatchGroup {
  /// Batch-local instance indices, duplicates kept.
  std::vector<std::size_t> members;
  double score = 0.0;
};

/// A set of groups together with the distinct instances they reference.
/// Node k of `features` and `graph` is dataset instance `instances[k]`.
struct Batch {
  std::vector<std::size_t> instances;
  FeatureMatrix features;
  std::vector<BatchGroup> groups;
  SimilarityGraph graph;
  double lambda = 0.0;

  [[nodiscard]] std::size_t num_instances() const noexcept { return instances.size(); }
  [[nodiscard]] std::size_t num_groups() const noexcept { return groups.size(); }
};

/// Collects `group_indices` and their distinct instances (in order of first
/// appearance). The graph is left empty and lambda at zero.
inline Batch assemble_batch(const Dataset& dataset, std::span<const std::size_t> group_indices) {
  if (group_indices.empty()) throw error(errc::invalid_argument, "a batch needs at least one group");
  Batch batch;
  std::vector<std::size_t> local(dataset.num_instances(), Dataset::npos);
  for (std::size_t g : group_indices) {
    BatchGroup bg;
    bg.score = dataset.group(g).score;
    const auto members = dataset.members_of(g);
    for (std::size_t k = 0; k < members.size(); ++k) {
      const std::size_t i = members[k];
      if (i == Dataset::npos) {
        throw error(errc::unresolved_member,
                    "group '" + dataset.group(g).id + "' member '" + dataset.group(g).members[k] + "'");
      }
      if (local[i] == Dataset::npos) {
        local[i] = batch.instances.size();
        batch.instances.push_back(i);
      }
      bg.members.push_back(local[i]);
    }
    if (bg.members.empty()) throw error(errc::empty_members, "group '" + dataset.group(g).id + "'");
    batch.groups.push_back(std::move(bg));
  }
  batch.features = FeatureMatrix::gather(dataset, batch.instances);
  return batch;
}

/// Batch with a dense RBF graph over its own instances and the given lambda.
inline Batch make_batch(const Dataset& dataset, std::span<const std::size_t> group_indices,
                        const SimilarityConfig& similarity, double lambda) {
  Batch batch = assemble_batch(dataset, group_indices);
  batch.graph = build_graph(dataset, similarity, batch.instances);
  batch.lambda = lambda;
  return batch;
}

namespace detail {

inline void check_batch(const Theta& theta, const Batch& batch) {
  if (batch.graph.num_instances() != batch.num_instances()) {
    throw error(errc::invalid_argument, "batch graph does not cover the batch instances");
  }
  if (!(batch.lambda >= 0.0) || !std::isfinite(batch.lambda)) {
    throw error(errc::invalid_argument, "batch lambda must be finite and >= 0");
  }
  if (batch.features.rows() > 0 && batch.features.cols() != theta.dim()) {
    throw error(errc::dimension_mismatch, "theta dimension does not match batch features");
  }
}

}  // namespace detail

inline std::vector<double> batch_scores(const Theta& theta, const Batch& batch) {
  std::vector<double> y(batch.num_instances());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = predict_score(theta, batch.features.row(i));
  return y;
}

/// Mean of `scores` over `members`, summed in member order.
inline double group_mean(std::span<const double> scores, std::span<const std::size_t> members) {
  double sum = 0.0;
  for (std::size_t i : members) sum += scores[i];
  return sum / static_cast<double>(members.size());
}

struct ObjectiveValue {
  double manifold = 0.0;
  double group = 0.0;
  double total = 0.0;
};

inline ObjectiveValue evaluate_objective(const Theta& theta, const Batch& batch) {
  detail::check_batch(theta, batch);
  const auto y = batch_scores(theta, batch);
  ObjectiveValue v;
  batch.graph.for_each_edge([&](std::size_t i, std::size_t j, double w) {
    const double diff = y[i] - y[j];
    v.manifold += w * diff * diff;
  });
  v.manifold *= 2.0;
  for (const BatchGroup& g : batch.groups) {
    const double r = group_mean(y, g.members) - g.score;
    v.group += r * r;
  }
  v.total = v.manifold + batch.lambda * v.group;
  return v;
}

inline double manifold_term(const Theta& theta, const Batch& batch) { return evaluate_objective(theta, batch).manifold; }
inline double group_term(const Theta& theta, const Batch& batch) { return evaluate_objective(theta, batch).group; }
inline double objective(const Theta& theta, const Batch& batch) { return evaluate_objective(theta, batch).total; }

/// Gradient of `objective` with respect to the flattened parameters
/// (weights, then bias when present).
///
/// With g_i = y_i (1 - y_i) x~_i, both terms reduce to sum_i c_i g_i where
///   c_i += 4 w(i,j) (y_i - y_j) per unordered edge (and -= for j), and
///   c_i += lambda * 2 (mean_g - s_g) / |g| per occurrence of i in g.
inline std::vector<double> gradient(const Theta& theta, const Batch& batch) {
  detail::check_batch(theta, batch);
  const auto y = batch_scores(theta, batch);
  std::vector<double> coeff(batch.num_instances(), 0.0);

  batch.graph.for_each_edge([&](std::size_t i, std::size_t j, double w) {
    const double c = 4.0 * w * (y[i] - y[j]);
    coeff[i] += c;
    coeff[j] -= c;
  });
  for (const BatchGroup& g : batch.groups) {
    const double residual = group_mean(y, g.members) - g.score;
    const double c = batch.lambda * 2.0 * residual / static_cast<double>(g.members.size());
    for (std::size_t i : g.members) coeff[i] += c;
  }

  std::vector<double> grad(theta.num_params(), 0.0);
  const std::size_t d = theta.dim();
  for (std::size_t i = 0; i < coeff.size(); ++i) {
    if (coeff[i] == 0.0) continue;
    const double scale = coeff[i] * y[i] * (1.0 - y[i]);
    const auto x = batch.features.row(i);
    for (std::size_t k = 0; k < d; ++k) grad[k] += scale * x[k];
    if (theta.bias) grad[d] += scale;
  }
  return grad;
}

}  // namespace milt
