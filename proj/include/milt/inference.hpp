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
/// Scoring, neutral-band labelling, per-group attribution and evaluation
/// metrics for a trained model.
///
/// Labelling convention: with band half-width b, a score is Neutral iff it
/// lies strictly inside (0.5 - b, 0.5 + b). Scores on the band edges take the
/// non-neutral label, and with b = 0 a score of exactly 0.5 is Positive.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <iomanip>
#include <numeric>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "milt/dataset.hpp"
#include "milt/error.hpp"
#include "milt/objective.hpp"
#include "milt/trainer.hpp"

namespace milt {

enum class Sentiment { negative, neutral, positive };

inline std::string_view to_string(Sentiment s) noexcept {
  switch (s) {
    case Sentiment::negative: return "negative";
    case Sentiment::neutral: return "neutral";
    case Sentiment::positive: return "positive";
  }
  return "unknown";
}

/// Half-width b of the neutral interval around 0.5, 0 <= b < 0.5.
class NeutralBand {
 public:
  static constexpr double default_width = 0.048;

  constexpr NeutralBand() = default;
  explicit NeutralBand(double b) : b_(b) {
    if (!(b >= 0.0 && b < 0.5)) throw error(errc::invalid_argument, "neutral band must satisfy 0 <= b < 0.5");
  }

  static NeutralBand none() { return NeutralBand(0.0); }

  [[nodiscard]] constexpr double width() const noexcept { return b_; }

 private:
  double b_ = default_width;
};

inline Sentiment classify(double score, NeutralBand band) {
  // Distance is computed the same way calibrate_band computes it.
  const bool upper = score >= 0.5;
  const double distance = upper ? score - 0.5 : 0.5 - score;
  if (distance < band.width()) return Sentiment::neutral;
  return upper ? Sentiment::positive : Sentiment::negative;
}

struct InstancePrediction {
  std::string id;
  double score = 0.0;
  Sentiment label = Sentiment::neutral;
};

inline std::vector<double> score_instances(const Model& model, std::span<const Instance> instances) {
  std::vector<double> scores;
  scores.reserve(instances.size());
  for (const Instance& inst : instances) {
    if (inst.dim() != model.dim) {
      throw error(errc::dimension_mismatch, "instance '" + inst.id() + "' has " + std::to_string(inst.dim()) +
                                                " features, model expects " + std::to_string(model.dim));
    }
    scores.push_back(model.score(inst.features()));
  }
  return scores;
}

inline std::vector<InstancePrediction> predict(const Model& model, std::span<const Instance> instances,
                                               NeutralBand band) {
  const auto scores = score_instances(model, instances);
  std::vector<InstancePrediction> out;
  out.reserve(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) out.push_back({instances[i].id(), scores[i], classify(scores[i], band)});
  return out;
}

namespace detail {

inline std::vector<std::size_t> resolve_members(const Group& group, const Dataset& dataset) {
  std::vector<std::size_t> idx;
  idx.reserve(group.members.size());
  for (const std::string& m : group.members) {
    const auto i = dataset.find(m);
    if (!i) throw error(errc::unresolved_member, "group '" + group.id + "' member '" + m + "'");
    idx.push_back(*i);
  }
  if (idx.empty()) throw error(errc::empty_members, "group '" + group.id + "'");
  return idx;
}

}  // namespace detail

/// Mean member score, duplicates counted once per occurrence.
inline double group_score(const Model& model, const Group& group, const Dataset& dataset) {
  const auto idx = detail::resolve_members(group, dataset);
  std::vector<double> scores;
  scores.reserve(idx.size());
  for (std::size_t i : idx) scores.push_back(model.score(dataset.instance(i).features()));
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  return group_mean(scores, order);
}

inline Sentiment classify_group(const Model& model, const Group& group, const Dataset& dataset) {
  return group_score(model, group, dataset) >= 0.5 ? Sentiment::positive : Sentiment::negative;
}

struct AttributionReport {
  std::string group_id;
  double group_score = 0.0;
  Sentiment group_label = Sentiment::positive;
  /// One row per member occurrence, highest score first.
  std::vector<InstancePrediction> members;
};

inline AttributionReport attribute(const Model& model, const Group& group, const Dataset& dataset,
                                   NeutralBand band = {}) {
  const auto idx = detail::resolve_members(group, dataset);
  AttributionReport report;
  report.group_id = group.id;
  report.group_score = group_score(model, group, dataset);
  report.group_label = report.group_score >= 0.5 ? Sentiment::positive : Sentiment::negative;
  for (std::size_t i : idx) {
    const double s = model.score(dataset.instance(i).features());
    report.members.push_back({dataset.instance(i).id(), s, classify(s, band)});
  }
  std::ranges::stable_sort(report.members, [](const InstancePrediction& a, const InstancePrediction& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.id < b.id;
  });
  return report;
}

// ---------------------------------------------------------------------------
// Metrics

enum class NeutralPolicy {
  /// Neutral predictions abstain: they lower recall and are left out of precision.
  ignore_neutral,
  /// Band forced to zero, so every prediction is a decision.
  no_neutral_band,
};

inline std::string_view to_string(NeutralPolicy p) noexcept {
  return p == NeutralPolicy::ignore_neutral ? "ignore_neutral" : "no_neutral_band";
}

struct ConfusionCounts {
  std::size_t true_positive = 0;
  std::size_t true_negative = 0;
  std::size_t false_positive = 0;
  std::size_t false_negative = 0;
  std::size_t neutral = 0;
};

struct MetricsReport {
  /// Correct decisions over all decisions; empty when nothing was decided.
  std::optional<double> precision;
  /// Decisions over all evaluated items.
  double recall = 0.0;
  /// Correct decisions over all evaluated items.
  double accuracy = 0.0;
  std::size_t total = 0;
  ConfusionCounts counts;
  NeutralPolicy policy = NeutralPolicy::ignore_neutral;
};

inline MetricsReport evaluate_instances(std::span<const InstancePrediction> predictions, std::span<const int> truths,
                                        NeutralPolicy policy) {
  if (predictions.empty()) throw error(errc::empty_evaluation, "no predictions to evaluate");
  if (predictions.size() != truths.size()) {
    throw error(errc::invalid_argument, "every prediction needs exactly one truth label");
  }
  MetricsReport r;
  r.policy = policy;
  r.total = predictions.size();
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    if (truths[i] != 0 && truths[i] != 1) throw error(errc::invalid_argument, "truth labels must be 0 or 1");
    const Sentiment label =
        policy == NeutralPolicy::no_neutral_band ? classify(predictions[i].score, NeutralBand::none()) : predictions[i].label;
    const bool truth = truths[i] == 1;
    switch (label) {
      case Sentiment::neutral: ++r.counts.neutral; break;
      case Sentiment::positive: ++(truth ? r.counts.true_positive : r.counts.false_positive); break;
      case Sentiment::negative: ++(truth ? r.counts.false_negative : r.counts.true_negative); break;
    }
  }
  const std::size_t decided = r.total - r.counts.neutral;
  const std::size_t correct = r.counts.true_positive + r.counts.true_negative;
  if (decided > 0) r.precision = static_cast<double>(correct) / static_cast<double>(decided);
  r.recall = static_cast<double>(decided) / static_cast<double>(r.total);
  r.accuracy = static_cast<double>(correct) / static_cast<double>(r.total);
  return r;
}

/// Hidden labels of `instances`, in order. Every instance must carry one.
inline std::vector<int> truth_labels(std::span<const Instance> instances) {
  std::vector<int> out;
  out.reserve(instances.size());
  for (const Instance& inst : instances) {
    const auto label = inst.true_label(evaluation_access{});
    if (!label) throw error(errc::invalid_argument, "instance '" + inst.id() + "' has no truth label");
    out.push_back(*label);
  }
  return out;
}

/// Fraction of groups whose averaged-score decision matches the group's
/// binary score.
inline double evaluate_groups(const Model& model, const Dataset& dataset) {
  if (dataset.num_groups() == 0) throw error(errc::empty_evaluation, "no groups to evaluate");
  std::size_t correct = 0;
  for (const Group& group : dataset.groups()) {
    if (group.score != 0.0 && group.score != 1.0) {
      throw error(errc::non_binary_score, "group '" + group.id + "' score is not 0 or 1");
    }
    const bool positive = classify_group(model, group, dataset) == Sentiment::positive;
    if (positive == (group.score == 1.0)) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(dataset.num_groups());
}

/// Widest band whose non-neutral fraction is still at least `target_recall`.
/// A target of 1 yields the empty band.
inline NeutralBand calibrate_band(std::span<const double> scores, double target_recall) {
  if (scores.empty()) throw error(errc::empty_evaluation, "calibration needs at least one score");
  if (!(target_recall > 0.0 && target_recall <= 1.0)) {
    throw error(errc::invalid_argument, "target recall must lie in (0, 1]");
  }
  if (target_recall >= 1.0) return NeutralBand::none();
  std::vector<double> dist;
  dist.reserve(scores.size());
  for (double s : scores) dist.push_back(s >= 0.5 ? s - 0.5 : 0.5 - s);
  std::ranges::sort(dist, std::greater<>{});
  const auto n = static_cast<double>(scores.size());
  auto needed = static_cast<std::size_t>(std::ceil(target_recall * n - 1e-9));
  needed = std::clamp<std::size_t>(needed, 1, scores.size());
  // Everything at distance >= dist[needed-1] stays decided.
  const double b = dist[needed - 1];
  return NeutralBand(std::min(b, std::nextafter(0.5, 0.0)));
}

/// Area under the ROC curve via the rank-sum statistic; tied scores share
/// their average rank.
inline double auc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size() || scores.empty()) {
    throw error(errc::invalid_argument, "auc needs equally sized, non-empty inputs");
  }
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::ranges::sort(order, [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double rank_sum = 0.0;
  std::size_t positives = 0;
  for (std::size_t lo = 0; lo < order.size();) {
    std::size_t hi = lo;
    while (hi + 1 < order.size() && scores[order[hi + 1]] == scores[order[lo]]) ++hi;
    const double avg_rank = 0.5 * static_cast<double>(lo + hi) + 1.0;
    for (std::size_t k = lo; k <= hi; ++k) {
      if (labels[order[k]] == 1) {
        rank_sum += avg_rank;
        ++positives;
      }
    }
    lo = hi + 1;
  }
  const std::size_t negatives = scores.size() - positives;
  if (positives == 0 || negatives == 0) throw error(errc::invalid_argument, "auc needs both classes");
  const auto p = static_cast<double>(positives);
  return (rank_sum - p * (p + 1.0) / 2.0) / (p * static_cast<double>(negatives));
}

// ---------------------------------------------------------------------------
// Report serialization

inline nlohmann::ordered_json to_json(const InstancePrediction& p) {
  nlohmann::ordered_json j;
  j["id"] = p.id;
  j["score"] = p.score;
  j["label"] = std::string(to_string(p.label));
  return j;
}

inline void write_predictions(std::ostream& out, std::span<const InstancePrediction> predictions) {
  for (const InstancePrediction& p : predictions) out << to_json(p).dump() << '\n';
}

inline nlohmann::ordered_json to_json(const AttributionReport& r) {
  nlohmann::ordered_json j;
  j["group_id"] = r.group_id;
  j["group_score"] = r.group_score;
  j["group_label"] = std::string(to_string(r.group_label));
  j["members"] = nlohmann::ordered_json::array();
  for (const InstancePrediction& m : r.members) j["members"].push_back(to_json(m));
  return j;
}

inline void write_attribution_table(std::ostream& out, const AttributionReport& r) {
  const auto flags = out.flags();
  const auto precision = out.precision();
  out << "group " << r.group_id << "  score " << std::fixed << std::setprecision(4) << r.group_score << "  "
      << to_string(r.group_label) << '\n';
  out << std::left << std::setw(6) << "rank" << std::setw(10) << "score" << std::setw(10) << "label" << "id\n";
  for (std::size_t k = 0; k < r.members.size(); ++k) {
    const InstancePrediction& m = r.members[k];
    out << std::left << std::setw(6) << (k + 1) << std::setw(10) << m.score << std::setw(10) << to_string(m.label)
        << m.id << '\n';
  }
  out.flags(flags);
  out.precision(precision);
}

inline nlohmann::ordered_json to_json(const MetricsReport& r) {
  nlohmann::ordered_json j;
  j["policy"] = std::string(to_string(r.policy));
  j["precision"] = r.precision ? nlohmann::ordered_json(*r.precision) : nlohmann::ordered_json(nullptr);
  j["recall"] = r.recall;
  j["accuracy"] = r.accuracy;
  j["total"] = r.total;
  j["counts"] = {{"true_positive", r.counts.true_positive},
                 {"true_negative", r.counts.true_negative},
                 {"false_positive", r.counts.false_positive},
                 {"false_negative", r.counts.false_negative},
                 {"neutral", r.counts.neutral}};
  return j;
}

}  // namespace milt
