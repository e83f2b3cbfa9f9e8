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
/// Gaussian (RBF) similarity between instances, w(i,j) = exp(-gamma * |xi - xj|^2),
/// materialized as a symmetric graph, either dense or kNN-sparsified.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iomanip>
#include <map>
#include <istream>
#include <numeric>
#include <optional>
#include <ostream>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <thread>
#include <tuple>
#include <utility>
#include <vector>

#include "milt/dataset.hpp"
#include "milt/detail/jsonl.hpp"
#include "milt/error.hpp"

namespace milt {

/// Dense row-major copy of a set of feature vectors.
class FeatureMatrix {
 public:
  FeatureMatrix() = default;
  FeatureMatrix(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), data_(rows * cols, 0.0) {}

  [[nodiscard]] std::size_t rows() const noexcept { return rows_; }
  [[nodiscard]] std::size_t cols() const noexcept { return cols_; }
  [[nodiscard]] std::span<const double> row(std::size_t i) const { return {data_.data() + i * cols_, cols_}; }
  [[nodiscard]] std::span<double> row(std::size_t i) { return {data_.data() + i * cols_, cols_}; }

  static FeatureMatrix gather(const Dataset& dataset, std::span<const std::size_t> indices) {
    FeatureMatrix m(indices.size(), dataset.dim());
    for (std::size_t r = 0; r < indices.size(); ++r) {
      const auto src = dataset.instance(indices[r]).features();
      std::ranges::copy(src, m.row(r).begin());
    }
    return m;
  }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

struct SimilarityConfig {
  double gamma = 1.0;
  /// Keep only each node's k nearest neighbours, then symmetrize by union.
  std::optional<std::size_t> knn;
  /// Reuse an on-disk graph when its header matches (see `load_or_build_graph`).
  bool cache = false;
  /// Worker threads for pair evaluation. The result does not depend on it.
  unsigned threads = 1;
};

namespace detail {

inline double squared_distance(std::span<const double> a, std::span<const double> b) {
  double acc = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    const double diff = a[k] - b[k];
    acc += diff * diff;
  }
  return acc;
}

inline void check_gamma(double gamma) {
  if (!(gamma > 0.0) || !std::isfinite(gamma)) {
    throw error(errc::invalid_argument, "similarity bandwidth gamma must be positive and finite");
  }
}

}  // namespace detail

inline double similarity(std::span<const double> xi, std::span<const double> xj, double gamma = 1.0) {
  if (xi.size() != xj.size()) {
    throw error(errc::dimension_mismatch,
                "similarity of vectors with " + std::to_string(xi.size()) + " and " + std::to_string(xj.size()) +
                    " components");
  }
  detail::check_gamma(gamma);
  return std::exp(-gamma * detail::squared_distance(xi, xj));
}

struct Edge {
  std::size_t i;
  std::size_t j;
  double weight;
};

/// Symmetric weighted graph in compressed adjacency form. Every unordered
/// edge is stored in both rows so w(i,j) == w(j,i) holds structurally.
/// Self-pairs are never stored.
class SimilarityGraph {
 public:
  SimilarityGraph() = default;

  /// `edges` must satisfy i < j < num_nodes, be sorted by (i, j) and be
  /// free of duplicates.
  static SimilarityGraph from_sorted_edges(std::size_t num_nodes, std::span<const Edge> edges) {
    SimilarityGraph g;
    g.offsets_.assign(num_nodes + 1, 0);
    for (const Edge& e : edges) {
      ++g.offsets_[e.i + 1];
      ++g.offsets_[e.j + 1];
    }
    std::partial_sum(g.offsets_.begin(), g.offsets_.end(), g.offsets_.begin());
    g.neighbors_.resize(g.offsets_.back());
    g.weights_.resize(g.offsets_.back());
    std::vector<std::size_t> cursor(g.offsets_.begin(), g.offsets_.end() - 1);
    // Lexicographic edge order keeps every row sorted by neighbour index.
    for (const Edge& e : edges) {
      g.neighbors_[cursor[e.i]] = e.j;
      g.weights_[cursor[e.i]++] = e.weight;
      g.neighbors_[cursor[e.j]] = e.i;
      g.weights_[cursor[e.j]++] = e.weight;
    }
    return g;
  }

  [[nodiscard]] std::size_t num_instances() const noexcept { return offsets_.empty() ? 0 : offsets_.size() - 1; }
  [[nodiscard]] std::size_t num_edges() const noexcept { return neighbors_.size() / 2; }

  [[nodiscard]] std::span<const std::size_t> neighbors(std::size_t i) const {
    return {neighbors_.data() + offsets_[i], offsets_[i + 1] - offsets_[i]};
  }
  [[nodiscard]] std::span<const double> weights(std::size_t i) const {
    return {weights_.data() + offsets_[i], offsets_[i + 1] - offsets_[i]};
  }

  [[nodiscard]] std::optional<double> weight(std::size_t i, std::size_t j) const {
    const auto row = neighbors(i);
    const auto it = std::ranges::lower_bound(row, j);
    if (it == row.end() || *it != j) return std::nullopt;
    return weights(i)[static_cast<std::size_t>(it - row.begin())];
  }

  /// Visits each unordered edge once, as (i, j, w) with i < j.
  template <typename Fn>
  void for_each_edge(Fn&& fn) const {
    for (std::size_t i = 0; i < num_instances(); ++i) {
      const auto nb = neighbors(i);
      const auto w = weights(i);
      for (std::size_t k = 0; k < nb.size(); ++k) {
        if (nb[k] > i) fn(i, nb[k], w[k]);
      }
    }
  }

  [[nodiscard]] std::vector<Edge> edges() const {
    std::vector<Edge> out;
    out.reserve(num_edges());
    for_each_edge([&](std::size_t i, std::size_t j, double w) { out.push_back({i, j, w}); });
    return out;
  }

  /// Restriction to `nodes` (indices into this graph), renumbered 0..n-1 in
  /// the given order.
  [[nodiscard]] SimilarityGraph induced(std::span<const std::size_t> nodes) const {
    std::vector<std::size_t> local(num_instances(), SIZE_MAX);
    for (std::size_t k = 0; k < nodes.size(); ++k) local.at(nodes[k]) = k;
    std::vector<Edge> out;
    for (std::size_t a = 0; a < nodes.size(); ++a) {
      const auto nb = neighbors(nodes[a]);
      const auto w = weights(nodes[a]);
      for (std::size_t k = 0; k < nb.size(); ++k) {
        const std::size_t b = local[nb[k]];
        if (b != SIZE_MAX && a < b) out.push_back({a, b, w[k]});
      }
    }
    std::ranges::sort(out, [](const Edge& x, const Edge& y) { return std::tie(x.i, x.j) < std::tie(y.i, y.j); });
    return from_sorted_edges(nodes.size(), out);
  }

 private:
  std::vector<std::size_t> offsets_;
  std::vector<std::size_t> neighbors_;
  std::vector<double> weights_;
};

namespace detail {

// Runs fn(row) for every row, spreading contiguous row blocks over workers.
template <typename Fn>
void parallel_rows(std::size_t rows, unsigned threads, Fn&& fn) {
  const unsigned workers = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(rows)));
  if (workers <= 1) {
    for (std::size_t r = 0; r < rows; ++r) fn(r);
    return;
  }
  std::vector<std::jthread> pool;
  const std::size_t chunk = (rows + workers - 1) / workers;
  for (unsigned t = 0; t < workers; ++t) {
    const std::size_t lo = t * chunk;
    const std::size_t hi = std::min(rows, lo + chunk);
    if (lo >= hi) break;
    pool.emplace_back([lo, hi, &fn] {
      for (std::size_t r = lo; r < hi; ++r) fn(r);
    });
  }
}

}  // namespace detail

/// Builds the similarity graph over the rows of `features`. `ids` orders
/// equidistant neighbours in kNN mode and must have one entry per row.
inline SimilarityGraph build_graph(const FeatureMatrix& features, std::span<const std::string> ids,
                                   const SimilarityConfig& config) {
  detail::check_gamma(config.gamma);
  const std::size_t n = features.rows();
  if (ids.size() != n) throw error(errc::invalid_argument, "one id per feature row is required");
  if (n == 0) throw error(errc::invalid_argument, "similarity graph scope is empty");

  std::vector<std::vector<Edge>> rows(n);
  if (!config.knn) {
    detail::parallel_rows(n, config.threads, [&](std::size_t i) {
      for (std::size_t j = i + 1; j < n; ++j) {
        const double w = std::exp(-config.gamma * detail::squared_distance(features.row(i), features.row(j)));
        if (w > 0.0) rows[i].push_back({i, j, w});
      }
    });
  } else {
    const std::size_t k = *config.knn;
    if (k < 1 || k >= n) {
      throw error(errc::invalid_argument,
                  "knn must satisfy 1 <= k < " + std::to_string(n) + ", got " + std::to_string(k));
    }
    std::vector<std::vector<std::size_t>> nearest(n);
    detail::parallel_rows(n, config.threads, [&](std::size_t i) {
      std::vector<std::pair<double, std::size_t>> cand;
      cand.reserve(n - 1);
      for (std::size_t j = 0; j < n; ++j) {
        if (j != i) cand.emplace_back(detail::squared_distance(features.row(i), features.row(j)), j);
      }
      auto closer = [&](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first < b.first;
        return ids[a.second] < ids[b.second];
      };
      std::partial_sort(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(k), cand.end(), closer);
      for (std::size_t r = 0; r < k; ++r) nearest[i].push_back(cand[r].second);
    });
    std::set<std::pair<std::size_t, std::size_t>> pairs;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j : nearest[i]) pairs.emplace(std::min(i, j), std::max(i, j));
    }
    for (const auto& [i, j] : pairs) {
      const double w = std::exp(-config.gamma * detail::squared_distance(features.row(i), features.row(j)));
      if (w > 0.0) rows[i].push_back({i, j, w});
    }
  }

  std::vector<Edge> edges;
  for (auto& r : rows) edges.insert(edges.end(), r.begin(), r.end());
  return SimilarityGraph::from_sorted_edges(n, edges);
}

namespace detail {

inline std::vector<std::size_t> full_scope(const Dataset& dataset) {
  std::vector<std::size_t> scope(dataset.num_instances());
  std::iota(scope.begin(), scope.end(), std::size_t{0});
  return scope;
}

inline std::vector<std::string> scope_ids(const Dataset& dataset, std::span<const std::size_t> scope) {
  std::vector<std::string> ids;
  ids.reserve(scope.size());
  for (std::size_t i : scope) ids.push_back(dataset.instance(i).id());
  return ids;
}

}  // namespace detail

/// Graph over `scope` (dataset instance indices; all instances when empty).
/// Node k of the result corresponds to scope[k].
inline SimilarityGraph build_graph(const Dataset& dataset, const SimilarityConfig& config,
                                   std::span<const std::size_t> scope = {}) {
  std::vector<std::size_t> all;
  if (scope.empty()) {
    all = detail::full_scope(dataset);
    scope = all;
  }
  for (std::size_t i : scope) {
    if (i >= dataset.num_instances()) throw error(errc::invalid_argument, "graph scope index out of range");
  }
  const auto ids = detail::scope_ids(dataset, scope);
  return build_graph(FeatureMatrix::gather(dataset, scope), ids, config);
}

// ---------------------------------------------------------------------------
// Graph cache: a JSON-lines file whose first line is a header and whose
// remaining lines are ["id_i","id_j",weight] triples.

/// Hash of the ids and feature bits of the scoped instances, in scope order.
inline std::uint64_t content_hash(const Dataset& dataset, std::span<const std::size_t> scope = {}) {
  std::vector<std::size_t> all;
  if (scope.empty()) {
    all = detail::full_scope(dataset);
    scope = all;
  }
  detail::fnv1a h;
  for (std::size_t i : scope) {
    const Instance& inst = dataset.instance(i);
    h.update(inst.id());
    for (double v : inst.features()) h.update(v);
  }
  return h.digest();
}

namespace detail {

inline std::string hex64(std::uint64_t v) {
  std::ostringstream out;
  out << std::hex << std::setw(16) << std::setfill('0') << v;
  return out.str();
}

}  // namespace detail

inline void save_graph(std::ostream& out, const SimilarityGraph& graph, const Dataset& dataset,
                       const SimilarityConfig& config, std::span<const std::size_t> scope = {}) {
  std::vector<std::size_t> all;
  if (scope.empty()) {
    all = detail::full_scope(dataset);
    scope = all;
  }
  nlohmann::ordered_json header;
  header["format"] = "milt-graph";
  header["version"] = 1;
  header["gamma"] = config.gamma;
  header["knn"] = config.knn ? nlohmann::ordered_json(*config.knn) : nlohmann::ordered_json(nullptr);
  header["nodes"] = scope.size();
  header["hash"] = detail::hex64(content_hash(dataset, scope));
  out << header.dump() << '\n';
  graph.for_each_edge([&](std::size_t i, std::size_t j, double w) {
    nlohmann::json triple = nlohmann::json::array(
        {dataset.instance(scope[i]).id(), dataset.instance(scope[j]).id(), w});
    out << triple.dump() << '\n';
  });
}

/// Reads a cached graph, rejecting it when the header does not match the
/// current data or configuration.
inline SimilarityGraph load_graph(std::istream& in, const std::string& source, const Dataset& dataset,
                                  const SimilarityConfig& config, std::span<const std::size_t> scope = {}) {
  using detail::json;
  std::vector<std::size_t> all;
  if (scope.empty()) {
    all = detail::full_scope(dataset);
    scope = all;
  }
  std::string line;
  if (!std::getline(in, line)) throw error(errc::malformed_line, source + ": missing graph header");
  json header;
  try {
    header = json::parse(line);
  } catch (const json::parse_error& e) {
    throw error(errc::malformed_line, detail::where(source, 1) + ": " + e.what());
  }
  if (header.value("format", "") != "milt-graph") throw error(errc::malformed_line, source + ": not a graph cache");
  if (header.value("version", 0) != 1) throw error(errc::unsupported_version, source + ": graph cache version");
  const std::string expected = detail::hex64(content_hash(dataset, scope));
  if (header.value("hash", "") != expected) {
    throw error(errc::stale_cache, source + ": dataset hash " + header.value("hash", "") + " != " + expected);
  }
  const bool knn_matches = config.knn ? (header["knn"].is_number() && header["knn"].get<std::size_t>() == *config.knn)
                                      : header["knn"].is_null();
  if (!header["gamma"].is_number() || header["gamma"].get<double>() != config.gamma || !knn_matches) {
    throw error(errc::stale_cache, source + ": cached with different gamma/knn");
  }

  std::map<std::string, std::size_t, std::less<>> local;
  for (std::size_t k = 0; k < scope.size(); ++k) local.emplace(dataset.instance(scope[k]).id(), k);

  std::vector<Edge> edges;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::is_blank(line)) continue;
    json triple;
    try {
      triple = json::parse(line);
    } catch (const json::parse_error& e) {
      throw error(errc::malformed_line, detail::where(source, line_no) + ": " + e.what());
    }
    if (!triple.is_array() || triple.size() != 3 || !triple[0].is_string() || !triple[1].is_string() ||
        !triple[2].is_number()) {
      throw error(errc::malformed_line, detail::where(source, line_no) + ": expected [id_i, id_j, weight]");
    }
    const auto a = local.find(triple[0].get<std::string>());
    const auto b = local.find(triple[1].get<std::string>());
    if (a == local.end() || b == local.end()) {
      throw error(errc::stale_cache, detail::where(source, line_no) + ": edge references unknown instance");
    }
    const double w = triple[2].get<double>();
    if (!(w > 0.0 && w <= 1.0) || a->second == b->second) {
      throw error(errc::malformed_line, detail::where(source, line_no) + ": invalid edge");
    }
    edges.push_back({std::min(a->second, b->second), std::max(a->second, b->second), w});
  }
  std::ranges::sort(edges, [](const Edge& x, const Edge& y) { return std::tie(x.i, x.j) < std::tie(y.i, y.j); });
  return SimilarityGraph::from_sorted_edges(scope.size(), edges);
}

/// Loads `path` when it holds a matching cache, otherwise builds the graph
/// and (re)writes the cache.
inline SimilarityGraph load_or_build_graph(const std::filesystem::path& path, const Dataset& dataset,
                                           const SimilarityConfig& config, std::span<const std::size_t> scope = {}) {
  if (std::filesystem::exists(path)) {
    auto in = detail::open_input(path);
    try {
      return load_graph(in, path.string(), dataset, config, scope);
    } catch (const error& e) {
      if (e.code() != errc::stale_cache) throw;
    }
  }
  SimilarityGraph graph = build_graph(dataset, config, scope);
  auto out = detail::open_output(path);
  save_graph(out, graph, dataset, config, scope);
  return graph;
}

}  // namespace milt
