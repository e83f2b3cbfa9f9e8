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
/// Mini-batch SGD over groups.
///
/// Each epoch shuffles the groups once and walks them in consecutive chunks
/// of `batch_groups` (the last chunk may be short). Each chunk becomes a
/// batch with its own RBF graph and lambda, and receives `inner_iters` plain
/// gradient steps at a constant learning rate. `max_total_iters` caps the
/// total number of steps across all epochs.

#pragma once

#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <istream>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "milt/dataset.hpp"
#include "milt/detail/jsonl.hpp"
#include "milt/error.hpp"
#include "milt/objective.hpp"
#include "milt/rng.hpp"
#include "milt/similarity.hpp"

namespace milt {

enum class LambdaScope { batch, global };

inline std::string_view to_string(LambdaScope scope) noexcept {
  return scope == LambdaScope::batch ? "batch" : "global";
}

inline LambdaScope parse_lambda_scope(std::string_view text) {
  if (text == "batch") return LambdaScope::batch;
  if (text == "global") return LambdaScope::global;
  throw error(errc::invalid_argument, "lambda scope must be 'batch' or 'global', got '" + std::string(text) + "'");
}

struct Hyperparams {
  /// Trade-off alpha in lambda = alpha |I|^2 / |G|.
  double alpha_tradeoff = 0.04;
  double learning_rate = 1e-4;
  std::size_t batch_groups = 50;
  std::size_t inner_iters = 7;
  std::size_t epochs = 3;
  std::optional<std::size_t> max_total_iters = 1050;
  double gamma = 1.0;
  bool use_bias = false;
  LambdaScope lambda_scope = LambdaScope::batch;
  /// When set, batch graphs are cut from one global kNN graph instead of
  /// being dense over the batch.
  std::optional<std::size_t> knn;
  std::uint64_t seed = 0;

  void validate() const {
    auto require = [](bool ok, const char* what) {
      if (!ok) throw error(errc::invalid_argument, what);
    };
    require(alpha_tradeoff >= 0.0 && std::isfinite(alpha_tradeoff), "alpha_tradeoff must be finite and >= 0");
    require(learning_rate > 0.0 && std::isfinite(learning_rate), "learning_rate must be finite and > 0");
    require(batch_groups > 0, "batch_groups must be positive");
    require(inner_iters > 0, "inner_iters must be positive");
    require(epochs > 0, "epochs must be positive");
    require(!max_total_iters || *max_total_iters > 0, "max_total_iters must be positive");
    require(gamma > 0.0 && std::isfinite(gamma), "gamma must be finite and > 0");
    require(!knn || *knn > 0, "knn must be positive");
  }

  friend bool operator==(const Hyperparams&, const Hyperparams&) = default;
};

struct TrainSummary {
  /// Objective of the last batch after its final step.
  double final_objective = 0.0;
  std::size_t iterations = 0;
  std::size_t batches = 0;
  /// Not persisted in model files, which must be reproducible byte for byte.
  double wall_seconds = 0.0;

  friend bool operator==(const TrainSummary&, const TrainSummary&) = default;
};

struct Model {
  Theta theta;
  std::size_t dim = 0;
  Hyperparams hyperparams;
  TrainSummary summary;

  [[nodiscard]] double score(std::span<const double> x) const { return predict_score(theta, x); }

  friend bool operator==(const Model&, const Model&) = default;
};

/// Emitted once per processed batch.
struct BatchLog {
  std::size_t epoch = 0;
  std::size_t batch = 0;
  std::size_t num_groups = 0;
  std::size_t num_instances = 0;
  double lambda = 0.0;
  double objective_before = 0.0;
  double objective_after = 0.0;
  std::size_t steps = 0;
};

struct TrainOptions {
  unsigned threads = 1;
  std::function<void(const BatchLog&)> on_batch;
  std::function<void(std::string_view)> on_warning;
  /// Prebuilt kNN graph over the whole dataset (e.g. loaded from a cache).
  /// Used only when `Hyperparams::knn` is set.
  const SimilarityGraph* global_graph = nullptr;
};

/// One epoch's partition of group indices: a seeded shuffle cut into
/// consecutive chunks of `batch_groups`, keeping a short final chunk.
inline std::vector<std::vector<std::size_t>> sample_minibatches(std::size_t num_groups, std::size_t batch_groups,
                                                                rng& gen) {
  if (batch_groups == 0) throw error(errc::invalid_argument, "batch_groups must be positive");
  std::vector<std::size_t> order(num_groups);
  for (std::size_t g = 0; g < num_groups; ++g) order[g] = g;
  gen.shuffle(std::span<std::size_t>(order));
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t lo = 0; lo < num_groups; lo += batch_groups) {
    const std::size_t hi = std::min(num_groups, lo + batch_groups);
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(lo),
                         order.begin() + static_cast<std::ptrdiff_t>(hi));
  }
  return batches;
}

/// Steps the schedule would take: min(cap, epochs * ceil(|G| / B) * inner).
inline std::size_t planned_iterations(const Hyperparams& hp, std::size_t num_groups) {
  const std::size_t per_epoch = (num_groups + hp.batch_groups - 1) / hp.batch_groups;
  const std::size_t planned = hp.epochs * per_epoch * hp.inner_iters;
  return hp.max_total_iters ? std::min(planned, *hp.max_total_iters) : planned;
}

/// Batch for `group_indices` with the graph and lambda the trainer would use.
/// `global_graph` must be over the full dataset when `hp.knn` is set.
inline Batch training_batch(const Dataset& dataset, std::span<const std::size_t> group_indices, const Hyperparams& hp,
                            const SimilarityGraph* global_graph = nullptr, unsigned threads = 1) {
  Batch batch = assemble_batch(dataset, group_indices);
  if (global_graph != nullptr) {
    batch.graph = global_graph->induced(batch.instances);
  } else {
    SimilarityConfig config;
    config.gamma = hp.gamma;
    config.threads = threads;
    batch.graph = build_graph(dataset, config, batch.instances);
  }
  batch.lambda = hp.lambda_scope == LambdaScope::batch
                     ? lambda_from_alpha(hp.alpha_tradeoff, batch.num_instances(), batch.num_groups())
                     : lambda_from_alpha(hp.alpha_tradeoff, dataset.num_instances(), dataset.num_groups());
  return batch;
}

inline Model train(const Dataset& dataset, const Hyperparams& hp, const TrainOptions& options = {}) {
  hp.validate();
  const ValidationReport report = check(dataset, /*strict_coverage=*/false);
  if (!report.ok()) throw validation_error(report);
  if (!report.uncovered.empty() && options.on_warning) {
    options.on_warning(std::to_string(report.uncovered.size()) +
                       " instance(s) belong to no group and will not be updated by training");
  }

  const auto start = std::chrono::steady_clock::now();
  Model model;
  model.dim = dataset.dim();
  model.hyperparams = hp;
  model.theta = Theta::zeros(dataset.dim(), hp.use_bias);

  std::optional<SimilarityGraph> global_graph;
  if (hp.knn && options.global_graph != nullptr) {
    if (options.global_graph->num_instances() != dataset.num_instances()) {
      throw error(errc::invalid_argument, "supplied kNN graph does not cover the dataset");
    }
    global_graph = *options.global_graph;
  } else if (hp.knn) {
    SimilarityConfig config;
    config.gamma = hp.gamma;
    config.knn = hp.knn;
    config.threads = options.threads;
    global_graph = build_graph(dataset, config);
  }

  rng gen(hp.seed);
  std::size_t steps = 0;
  bool capped = false;
  for (std::size_t epoch = 0; epoch < hp.epochs && !capped; ++epoch) {
    const auto batches = sample_minibatches(dataset.num_groups(), hp.batch_groups, gen);
    for (std::size_t b = 0; b < batches.size() && !capped; ++b) {
      if (hp.max_total_iters && steps >= *hp.max_total_iters) {
        capped = true;
        break;
      }
      const Batch batch =
          training_batch(dataset, batches[b], hp, global_graph ? &*global_graph : nullptr, options.threads);
      BatchLog log{epoch, b, batch.num_groups(), batch.num_instances(), batch.lambda, 0.0, 0.0, 0};
      log.objective_before = objective(model.theta, batch);

      std::vector<double> params = model.theta.flatten();
      for (std::size_t it = 0; it < hp.inner_iters; ++it) {
        if (hp.max_total_iters && steps >= *hp.max_total_iters) {
          capped = true;
          break;
        }
        const std::vector<double> grad = gradient(model.theta, batch);
        for (std::size_t k = 0; k < params.size(); ++k) {
          if (!std::isfinite(grad[k])) {
            throw error(errc::non_finite_training, "non-finite gradient at step " + std::to_string(steps) +
                                                       " (epoch " + std::to_string(epoch) + ", batch " +
                                                       std::to_string(b) + ")");
          }
          params[k] -= hp.learning_rate * grad[k];
          if (!std::isfinite(params[k])) {
            throw error(errc::non_finite_training, "parameters diverged at step " + std::to_string(steps) +
                                                       " (epoch " + std::to_string(epoch) + ", batch " +
                                                       std::to_string(b) + ")");
          }
        }
        model.theta = Theta::unflatten(params, hp.use_bias);
        ++steps;
        ++log.steps;
      }

      log.objective_after = objective(model.theta, batch);
      if (!std::isfinite(log.objective_after) || !model.theta.finite()) {
        throw error(errc::non_finite_training, "non-finite objective after step " + std::to_string(steps) +
                                                   " (epoch " + std::to_string(epoch) + ", batch " +
                                                   std::to_string(b) + ")");
      }
      model.summary.final_objective = log.objective_after;
      ++model.summary.batches;
      if (options.on_batch) options.on_batch(log);
    }
  }
  model.summary.iterations = steps;
  model.summary.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return model;
}

// ---------------------------------------------------------------------------
// Model files

inline constexpr int model_format_version = 1;

inline nlohmann::ordered_json to_json(const Hyperparams& hp) {
  nlohmann::ordered_json j;
  j["alpha_tradeoff"] = hp.alpha_tradeoff;
  j["learning_rate"] = hp.learning_rate;
  j["batch_groups"] = hp.batch_groups;
  j["inner_iters"] = hp.inner_iters;
  j["epochs"] = hp.epochs;
  j["max_total_iters"] = hp.max_total_iters ? nlohmann::ordered_json(*hp.max_total_iters) : nullptr;
  j["gamma"] = hp.gamma;
  j["use_bias"] = hp.use_bias;
  j["lambda_scope"] = std::string(to_string(hp.lambda_scope));
  j["knn"] = hp.knn ? nlohmann::ordered_json(*hp.knn) : nullptr;
  j["seed"] = hp.seed;
  return j;
}

inline Hyperparams hyperparams_from_json(const nlohmann::json& j) {
  Hyperparams hp;
  hp.alpha_tradeoff = j.at("alpha_tradeoff").get<double>();
  hp.learning_rate = j.at("learning_rate").get<double>();
  hp.batch_groups = j.at("batch_groups").get<std::size_t>();
  hp.inner_iters = j.at("inner_iters").get<std::size_t>();
  hp.epochs = j.at("epochs").get<std::size_t>();
  if (!j.at("max_total_iters").is_null()) {
    hp.max_total_iters = j["max_total_iters"].get<std::size_t>();
  } else {
    hp.max_total_iters.reset();
  }
  hp.gamma = j.at("gamma").get<double>();
  hp.use_bias = j.at("use_bias").get<bool>();
  hp.lambda_scope = parse_lambda_scope(j.at("lambda_scope").get<std::string>());
  if (!j.at("knn").is_null()) hp.knn = j["knn"].get<std::size_t>();
  hp.seed = j.at("seed").get<std::uint64_t>();
  return hp;
}

inline void save_model(std::ostream& out, const Model& model) {
  nlohmann::ordered_json j;
  j["version"] = model_format_version;
  j["dim"] = model.dim;
  j["bias"] = model.theta.bias.has_value();
  j["theta"] = model.theta.weights;
  if (model.theta.bias) j["bias_value"] = *model.theta.bias;
  j["hyperparams"] = to_json(model.hyperparams);
  j["summary"] = {{"final_objective", model.summary.final_objective},
                  {"iterations", model.summary.iterations},
                  {"batches", model.summary.batches}};
  out << j.dump(2) << '\n';
}

inline void save_model(const std::filesystem::path& path, const Model& model) {
  auto out = detail::open_output(path);
  save_model(out, model);
  if (!out) throw error(errc::io_error, "failed writing '" + path.string() + "'");
}

inline Model load_model(std::istream& in, const std::string& source) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw error(errc::corrupt_model, source + ": " + e.what());
  }
  if (!j.is_object() || !j.contains("version") || !j["version"].is_number_integer()) {
    throw error(errc::corrupt_model, source + ": missing format version");
  }
  const int version = j["version"].get<int>();
  if (version != model_format_version) {
    throw error(errc::unsupported_version, source + ": model format version " + std::to_string(version) +
                                               ", this build reads version " +
                                               std::to_string(model_format_version));
  }
  try {
    Model model;
    model.dim = j.at("dim").get<std::size_t>();
    model.theta.weights = j.at("theta").get<std::vector<double>>();
    if (model.theta.weights.size() != model.dim) {
      throw error(errc::corrupt_model, source + ": dim " + std::to_string(model.dim) + " but theta has " +
                                           std::to_string(model.theta.weights.size()) + " components");
    }
    if (j.at("bias").get<bool>()) model.theta.bias = j.at("bias_value").get<double>();
    if (!model.theta.finite()) throw error(errc::corrupt_model, source + ": non-finite parameters");
    model.hyperparams = hyperparams_from_json(j.at("hyperparams"));
    if (model.hyperparams.use_bias != model.theta.bias.has_value()) {
      throw error(errc::corrupt_model, source + ": bias flag disagrees with hyperparams");
    }
    if (const auto s = j.find("summary"); s != j.end()) {
      model.summary.final_objective = s->value("final_objective", 0.0);
      model.summary.iterations = s->value("iterations", std::size_t{0});
      model.summary.batches = s->value("batches", std::size_t{0});
    }
    return model;
  } catch (const nlohmann::json::exception& e) {
    throw error(errc::corrupt_model, source + ": " + e.what());
  }
}

inline Model load_model(const std::filesystem::path& path) {
  auto in = detail::open_input(path);
  return load_model(in, path.string());
}

}  // namespace milt
