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
/// Synthetic bag datasets with known instance labels, and brute-force
/// reference evaluations of the objective used to check the fast path.
///
/// The reference code below deliberately shares no arithmetic with
/// objective.hpp or similarity.hpp: it re-derives scores, kernel weights and
/// both terms from scratch with explicit loops over every ordered pair.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "milt/dataset.hpp"
#include "milt/error.hpp"
#include "milt/objective.hpp"
#include "milt/rng.hpp"

namespace milt {

enum class Composition {
  /// Every bag holds round(fixed_fraction * size) positives.
  fixed,
  /// Positive count uniform on {0, ..., size}.
  uniform,
  /// Per-bag rate q ~ U(0,1), then each member positive with probability q.
  bernoulli_bag,
};

enum class ScoreMode {
  /// Score is the exact positive fraction of the bag.
  proportion,
  /// Score is 1 iff the positive fraction is at least one half.
  binary_majority,
};

inline Composition parse_composition(std::string_view text) {
  if (text == "fixed") return Composition::fixed;
  if (text == "uniform") return Composition::uniform;
  if (text == "bernoulli-bag" || text == "bernoulli_bag") return Composition::bernoulli_bag;
  throw error(errc::invalid_argument, "unknown composition '" + std::string(text) + "'");
}

inline ScoreMode parse_score_mode(std::string_view text) {
  if (text == "proportion") return ScoreMode::proportion;
  if (text == "binary" || text == "binary-majority" || text == "binary_majority") return ScoreMode::binary_majority;
  throw error(errc::invalid_argument, "unknown score mode '" + std::string(text) + "'");
}

/// Defaults are the standard benchmark: two Gaussian classes at (+-2, 0) with
/// noise 0.5, 200 bags of 10, uniform composition, proportion scores.
struct SynthConfig {
  std::size_t dim = 2;
  std::size_t n_groups = 200;
  std::size_t group_size_min = 10;
  std::size_t group_size_max = 10;
  std::vector<double> positive_mean{2.0, 0.0};
  std::vector<double> negative_mean{-2.0, 0.0};
  double noise_std = 0.5;
  Composition composition = Composition::uniform;
  double fixed_fraction = 0.5;
  ScoreMode score_mode = ScoreMode::proportion;
  std::uint64_t seed = 0;

  /// Class means at +-separation along the first axis.
  static std::vector<double> axis_mean(std::size_t dim, double separation) {
    std::vector<double> m(dim, 0.0);
    if (dim > 0) m[0] = separation;
    return m;
  }

  void validate() const {
    auto require = [](bool ok, const char* what) {
      if (!ok) throw error(errc::invalid_argument, what);
    };
    require(dim > 0, "synth dim must be positive");
    require(n_groups > 0, "synth n_groups must be positive");
    require(group_size_min > 0 && group_size_min <= group_size_max, "synth group size range is invalid");
    require(positive_mean.size() == dim && negative_mean.size() == dim, "synth class means must have length dim");
    require(noise_std > 0.0 && std::isfinite(noise_std), "synth noise_std must be positive");
    require(fixed_fraction >= 0.0 && fixed_fraction <= 1.0, "synth fixed_fraction must lie in [0, 1]");
  }
};

namespace detail {

inline std::string padded(char prefix, std::size_t value, std::size_t width) {
  std::string digits = std::to_string(value);
  if (digits.size() < width) digits.insert(0, width - digits.size(), '0');
  return prefix + digits;
}

}  // namespace detail

inline Dataset generate(const SynthConfig& config) {
  config.validate();
  rng gen(config.seed);

  std::vector<std::size_t> sizes(config.n_groups);
  std::vector<std::vector<int>> labels(config.n_groups);
  std::size_t total = 0;
  for (std::size_t g = 0; g < config.n_groups; ++g) {
    const std::size_t size = config.group_size_min + gen.index(config.group_size_max - config.group_size_min + 1);
    std::size_t positives = 0;
    switch (config.composition) {
      case Composition::fixed:
        positives = static_cast<std::size_t>(std::lround(config.fixed_fraction * static_cast<double>(size)));
        break;
      case Composition::uniform:
        positives = gen.index(size + 1);
        break;
      case Composition::bernoulli_bag: {
        const double q = gen.uniform();
        for (std::size_t k = 0; k < size; ++k) positives += gen.bernoulli(q) ? 1 : 0;
        break;
      }
    }
    labels[g].assign(size, 0);
    std::fill_n(labels[g].begin(), positives, 1);
    gen.shuffle(std::span<int>(labels[g]));
    sizes[g] = size;
    total += size;
  }

  const std::size_t inst_width = std::to_string(total > 0 ? total - 1 : 0).size();
  const std::size_t group_width = std::to_string(config.n_groups - 1).size();
  std::vector<Instance> instances;
  std::vector<Group> groups;
  instances.reserve(total);
  groups.reserve(config.n_groups);
  for (std::size_t g = 0; g < config.n_groups; ++g) {
    Group group;
    group.id = detail::padded('g', g, group_width);
    std::size_t positives = 0;
    for (int label : labels[g]) {
      const auto& mean = label == 1 ? config.positive_mean : config.negative_mean;
      std::vector<double> x(config.dim);
      for (std::size_t k = 0; k < config.dim; ++k) x[k] = gen.normal(mean[k], config.noise_std);
      std::string id = detail::padded('s', instances.size(), inst_width);
      group.members.push_back(id);
      instances.emplace_back(std::move(id), std::move(x), label);
      positives += static_cast<std::size_t>(label);
    }
    const double fraction = static_cast<double>(positives) / static_cast<double>(sizes[g]);
    group.score = config.score_mode == ScoreMode::proportion ? fraction : (2 * positives >= sizes[g] ? 1.0 : 0.0);
    groups.push_back(std::move(group));
  }
  return Dataset(std::move(instances), std::move(groups));
}

// ---------------------------------------------------------------------------
// Reference evaluations

inline constexpr std::size_t oracle_max_instances = 200;

/// Objective over every instance of `dataset`, by explicit double loop.
inline double oracle_objective(const Theta& theta, const Dataset& dataset, double gamma, double lambda) {
  const std::size_t n = dataset.num_instances();
  if (n > oracle_max_instances) {
    throw error(errc::size_guard, "reference objective is limited to " + std::to_string(oracle_max_instances) +
                                      " instances, got " + std::to_string(n));
  }
  std::vector<double> y(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto x = dataset.instance(i).features();
    double z = theta.bias ? *theta.bias : 0.0;
    for (std::size_t k = 0; k < x.size(); ++k) z += theta.weights.at(k) * x[k];
    y[i] = 1.0 / (1.0 + std::exp(-z));
  }

  double pairs = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const auto xi = dataset.instance(i).features();
      const auto xj = dataset.instance(j).features();
      double dist2 = 0.0;
      for (std::size_t k = 0; k < xi.size(); ++k) dist2 += (xi[k] - xj[k]) * (xi[k] - xj[k]);
      const double w = std::exp(-gamma * dist2);
      pairs += w * (y[i] - y[j]) * (y[i] - y[j]);
    }
  }

  double groups = 0.0;
  for (const Group& group : dataset.groups()) {
    double sum = 0.0;
    for (const std::string& member : group.members) {
      const auto idx = dataset.find(member);
      if (!idx) throw error(errc::unresolved_member, "group '" + group.id + "' member '" + member + "'");
      sum += y[*idx];
    }
    const double mean = sum / static_cast<double>(group.members.size());
    groups += (mean - group.score) * (mean - group.score);
  }
  return pairs + lambda * groups;
}

/// Central finite differences of `oracle_objective` over the flattened
/// parameters (weights, then bias).
inline std::vector<double> oracle_gradient(const Theta& theta, const Dataset& dataset, double gamma, double lambda,
                                           double step) {
  if (!(step > 0.0)) throw error(errc::invalid_argument, "finite-difference step must be positive");
  const std::vector<double> base = theta.flatten();
  std::vector<double> grad(base.size());
  for (std::size_t k = 0; k < base.size(); ++k) {
    std::vector<double> plus = base;
    std::vector<double> minus = base;
    plus[k] += step;
    minus[k] -= step;
    const double up = oracle_objective(Theta::unflatten(plus, theta.bias.has_value()), dataset, gamma, lambda);
    const double down = oracle_objective(Theta::unflatten(minus, theta.bias.has_value()), dataset, gamma, lambda);
    grad[k] = (up - down) / (2.0 * step);
  }
  return grad;
}

/// A small random problem for cross-checking the fast objective path.
struct OracleProblem {
  Dataset dataset;
  Theta theta;
  double gamma = 1.0;
  double lambda = 1.0;
};

/// d in [1,8], |I| in [2,12], |G| in [1,4]; every instance is placed in at
/// least one group and groups may repeat members.
inline OracleProblem random_oracle_problem(std::uint64_t seed) {
  rng gen(seed);
  const std::size_t dim = 1 + gen.index(8);
  const std::size_t n = 2 + gen.index(11);
  const std::size_t n_groups = 1 + gen.index(4);

  std::vector<Instance> instances;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> x(dim);
    for (double& v : x) v = gen.normal(0.0, 0.6);
    instances.emplace_back("x" + std::to_string(i), std::move(x));
  }
  std::vector<Group> groups(n_groups);
  for (std::size_t g = 0; g < n_groups; ++g) {
    groups[g].id = "G" + std::to_string(g);
    groups[g].score = gen.uniform();
  }
  for (std::size_t i = 0; i < n; ++i) groups[gen.index(n_groups)].members.push_back(instances[i].id());
  for (Group& group : groups) {
    const std::size_t extra = group.members.empty() ? 1 + gen.index(3) : gen.index(3);
    for (std::size_t e = 0; e < extra; ++e) group.members.push_back(instances[gen.index(n)].id());
  }

  OracleProblem p;
  p.theta.weights.resize(dim);
  for (double& w : p.theta.weights) w = gen.normal(0.0, 1.0);
  if (gen.bernoulli(0.5)) p.theta.bias = gen.normal(0.0, 1.0);
  p.gamma = gen.uniform(0.25, 2.0);
  p.lambda = gen.uniform(0.0, 5.0);
  p.dataset = Dataset(std::move(instances), std::move(groups));
  return p;
}

/// Full-data batch matching what the reference functions evaluate.
inline Batch oracle_batch(const OracleProblem& p) {
  std::vector<std::size_t> all(p.dataset.num_groups());
  std::iota(all.begin(), all.end(), std::size_t{0});
  SimilarityConfig config;
  config.gamma = p.gamma;
  return make_batch(p.dataset, all, config, p.lambda);
}

struct GradcheckResult {
  std::size_t trials = 0;
  double max_relative_error = 0.0;
};

/// Largest component-wise |analytic - numeric| / max(1, |numeric|) over
/// `trials` random problems derived from `seed`.
inline GradcheckResult gradcheck(std::uint64_t seed, std::size_t trials, double step = 1e-6) {
  GradcheckResult result;
  rng seeds(seed);
  for (std::size_t t = 0; t < trials; ++t) {
    const OracleProblem p = random_oracle_problem(seeds.next_u64());
    const auto analytic = gradient(p.theta, oracle_batch(p));
    const auto numeric = oracle_gradient(p.theta, p.dataset, p.gamma, p.lambda, step);
    for (std::size_t k = 0; k < analytic.size(); ++k) {
      const double rel = std::abs(analytic[k] - numeric[k]) / std::max(1.0, std::abs(numeric[k]));
      result.max_relative_error = std::max(result.max_relative_error, rel);
    }
    ++result.trials;
  }
  return result;
}

}  // namespace milt
