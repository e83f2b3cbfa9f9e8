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
/// Instances, groups and the dataset that ties them together, plus the
/// JSON-lines readers and writers for both record kinds.
///
/// An instance is an identified feature vector. A group is a multiset of
/// instance ids with one observed score in [0, 1]; duplicate members are
/// legal and count once per occurrence. Instances may carry a hidden binary
/// label. That label is only reachable through `evaluation_access`, a tag
/// that training code never constructs.

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <functional>
#include <istream>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "milt/detail/jsonl.hpp"
#include "milt/error.hpp"

namespace milt {

/// Tag required to read ground-truth labels. Only evaluation and data
/// generation paths construct it.
struct evaluation_access {
  explicit evaluation_access() = default;
};

class Instance {
 public:
  Instance(std::string id, std::vector<double> features, std::optional<int> true_label = std::nullopt)
      : id_(std::move(id)), features_(std::move(features)), true_label_(true_label) {}

  [[nodiscard]] const std::string& id() const noexcept { return id_; }
  [[nodiscard]] std::span<const double> features() const noexcept { return features_; }
  [[nodiscard]] std::size_t dim() const noexcept { return features_.size(); }

  [[nodiscard]] std::optional<int> true_label(evaluation_access) const noexcept { return true_label_; }

  friend bool operator==(const Instance&, const Instance&) = default;

 private:
  std::string id_;
  std::vector<double> features_;
  std::optional<int> true_label_;
};

struct Group {
  std::string id;
  std::vector<std::string> members;
  double score = 0.0;
  std::vector<std::string> tags;

  friend bool operator==(const Group&, const Group&) = default;
};

/// Instances plus groups with id resolution. Construction never throws on
/// inconsistent content; run `validate` to enforce the invariants.
class Dataset {
 public:
  static constexpr std::size_t npos = std::numeric_limits<std::size_t>::max();

  Dataset() = default;

  Dataset(std::vector<Instance> instances, std::vector<Group> groups)
      : instances_(std::move(instances)), groups_(std::move(groups)) {
    for (std::size_t i = 0; i < instances_.size(); ++i) {
      instance_index_.emplace(instances_[i].id(), i);
    }
    for (std::size_t g = 0; g < groups_.size(); ++g) {
      group_index_.emplace(groups_[g].id, g);
    }
    resolved_.reserve(groups_.size());
    for (const Group& group : groups_) {
      std::vector<std::size_t> idx;
      idx.reserve(group.members.size());
      for (const std::string& member : group.members) {
        idx.push_back(find(member).value_or(npos));
      }
      resolved_.push_back(std::move(idx));
    }
  }

  [[nodiscard]] std::span<const Instance> instances() const noexcept { return instances_; }
  [[nodiscard]] std::span<const Group> groups() const noexcept { return groups_; }
  [[nodiscard]] const Instance& instance(std::size_t i) const { return instances_.at(i); }
  [[nodiscard]] const Group& group(std::size_t g) const { return groups_.at(g); }
  [[nodiscard]] std::size_t num_instances() const noexcept { return instances_.size(); }
  [[nodiscard]] std::size_t num_groups() const noexcept { return groups_.size(); }

  /// Feature dimension, taken from the first instance (0 when empty).
  [[nodiscard]] std::size_t dim() const noexcept { return instances_.empty() ? 0 : instances_.front().dim(); }

  [[nodiscard]] std::optional<std::size_t> find(std::string_view id) const {
    const auto it = instance_index_.find(id);
    if (it == instance_index_.end()) return std::nullopt;
    return it->second;
  }

  [[nodiscard]] std::optional<std::size_t> find_group(std::string_view id) const {
    const auto it = group_index_.find(id);
    if (it == group_index_.end()) return std::nullopt;
    return it->second;
  }

  /// Instance indices of group `g` in member order; unresolved ids map to npos.
  [[nodiscard]] std::span<const std::size_t> members_of(std::size_t g) const { return resolved_.at(g); }

  friend bool operator==(const Dataset& a, const Dataset& b) {
    return a.instances_ == b.instances_ && a.groups_ == b.groups_;
  }

 private:
  std::vector<Instance> instances_;
  std::vector<Group> groups_;
  std::map<std::string, std::size_t, std::less<>> instance_index_;
  std::map<std::string, std::size_t, std::less<>> group_index_;
  std::vector<std::vector<std::size_t>> resolved_;
};

// ---------------------------------------------------------------------------
// Validation

struct ValidationIssue {
  errc code;
  std::string record_id;
  std::string message;
};

struct ValidationReport {
  std::vector<ValidationIssue> issues;
  /// Instances referenced by no group. These are errors under strict
  /// coverage and warnings otherwise.
  std::vector<std::string> uncovered;
  std::size_t warnings = 0;

  [[nodiscard]] bool ok() const noexcept { return issues.empty(); }

  [[nodiscard]] std::string summary() const {
    std::ostringstream out;
    out << issues.size() << " invariant violation(s)";
    for (const ValidationIssue& issue : issues) {
      out << "\n  " << to_string(issue.code) << "(" << issue.record_id << "): " << issue.message;
    }
    return out.str();
  }
};

class validation_error : public error {
 public:
  explicit validation_error(ValidationReport report)
      : error(report.issues.empty() ? errc::invalid_argument : report.issues.front().code, report.summary()),
        report_(std::move(report)) {}

  [[nodiscard]] const ValidationReport& report() const noexcept { return report_; }

 private:
  ValidationReport report_;
};

/// Collects every violated invariant instead of stopping at the first.
inline ValidationReport check(const Dataset& dataset, bool strict_coverage) {
  ValidationReport report;
  auto fail = [&](errc code, const std::string& id, std::string message) {
    report.issues.push_back({code, id, std::move(message)});
  };

  if (dataset.num_instances() == 0) fail(errc::empty_dataset, "", "dataset has no instances");
  if (dataset.num_groups() == 0) fail(errc::empty_dataset, "", "dataset has no groups");

  const std::size_t dim = dataset.dim();
  std::set<std::string_view> seen;
  for (const Instance& inst : dataset.instances()) {
    if (!seen.insert(inst.id()).second) fail(errc::duplicate_id, inst.id(), "instance id appears more than once");
    if (inst.dim() != dim) {
      fail(errc::dimension_mismatch, inst.id(),
           "has " + std::to_string(inst.dim()) + " features, expected " + std::to_string(dim));
    }
    if (inst.dim() == 0) fail(errc::dimension_mismatch, inst.id(), "empty feature vector");
    if (!std::ranges::all_of(inst.features(), [](double v) { return std::isfinite(v); })) {
      fail(errc::non_finite_feature, inst.id(), "feature vector contains a non-finite value");
    }
    const auto label = inst.true_label(evaluation_access{});
    if (label && *label != 0 && *label != 1) fail(errc::invalid_argument, inst.id(), "label must be 0 or 1");
  }

  std::vector<bool> covered(dataset.num_instances(), false);
  std::set<std::string_view> seen_groups;
  for (std::size_t g = 0; g < dataset.num_groups(); ++g) {
    const Group& group = dataset.group(g);
    if (!seen_groups.insert(group.id).second) fail(errc::duplicate_id, group.id, "group id appears more than once");
    if (group.members.empty()) fail(errc::empty_members, group.id, "group has no members");
    if (!(group.score >= 0.0 && group.score <= 1.0)) {
      fail(errc::score_out_of_range, group.id, "score must lie in [0, 1]");
    }
    const auto members = dataset.members_of(g);
    for (std::size_t k = 0; k < members.size(); ++k) {
      if (members[k] == Dataset::npos) {
        fail(errc::unresolved_member, group.id, "member '" + group.members[k] + "' is not a known instance");
      } else {
        covered[members[k]] = true;
      }
    }
  }

  for (std::size_t i = 0; i < covered.size(); ++i) {
    if (covered[i]) continue;
    const std::string& id = dataset.instance(i).id();
    report.uncovered.push_back(id);
    if (strict_coverage) {
      fail(errc::uncovered_instance, id, "instance belongs to no group");
    } else {
      ++report.warnings;
    }
  }
  return report;
}

/// Returns `dataset` unchanged when every invariant holds; otherwise throws a
/// `validation_error` naming each offending record.
inline const Dataset& validate(const Dataset& dataset, bool strict_coverage) {
  ValidationReport report = check(dataset, strict_coverage);
  if (!report.ok()) throw validation_error(std::move(report));
  return dataset;
}

// ---------------------------------------------------------------------------
// JSON-lines IO

inline std::vector<Instance> load_instances(std::istream& in, const std::string& source,
                                            std::optional<std::size_t> dim = std::nullopt) {
  using detail::json;
  if (dim && *dim == 0) throw error(errc::invalid_argument, "dimension must be positive");
  std::vector<Instance> out;
  std::set<std::string, std::less<>> ids;
  detail::for_each_record(in, source, [&](const json& rec, std::size_t line) {
    const std::string at = detail::where(source, line);
    const auto id_it = rec.find("id");
    const auto feat_it = rec.find("features");
    if (id_it == rec.end() || !id_it->is_string()) throw error(errc::malformed_line, at + ": missing string 'id'");
    if (feat_it == rec.end() || !feat_it->is_array()) {
      throw error(errc::malformed_line, at + ": missing array 'features'");
    }
    std::string id = id_it->get<std::string>();
    std::vector<double> features;
    features.reserve(feat_it->size());
    for (const json& v : *feat_it) {
      if (!v.is_number()) throw error(errc::malformed_line, at + ": features must be numbers");
      const double x = v.get<double>();
      if (!std::isfinite(x)) throw error(errc::non_finite_feature, at + ": instance '" + id + "'");
      features.push_back(x);
    }
    if (features.empty()) throw error(errc::dimension_mismatch, at + ": empty feature vector");
    if (!dim) dim = features.size();
    if (features.size() != *dim) {
      throw error(errc::dimension_mismatch, at + ": instance '" + id + "' has " + std::to_string(features.size()) +
                                                " features, expected " + std::to_string(*dim));
    }
    std::optional<int> label;
    if (const auto lab = rec.find("label"); lab != rec.end() && !lab->is_null()) {
      if (!lab->is_number() || (lab->get<double>() != 0.0 && lab->get<double>() != 1.0)) {
        throw error(errc::malformed_line, at + ": label must be 0 or 1");
      }
      label = lab->get<double>() == 1.0 ? 1 : 0;
    }
    if (!ids.insert(id).second) throw error(errc::duplicate_id, at + ": instance '" + id + "'");
    out.emplace_back(std::move(id), std::move(features), label);
  });
  return out;
}

inline std::vector<Instance> load_instances(const std::filesystem::path& path,
                                            std::optional<std::size_t> dim = std::nullopt) {
  auto in = detail::open_input(path);
  return load_instances(in, path.string(), dim);
}

inline std::vector<Group> load_groups(std::istream& in, const std::string& source,
                                      std::span<const Instance> instances) {
  using detail::json;
  std::set<std::string_view> known;
  for (const Instance& inst : instances) known.insert(inst.id());

  std::vector<Group> out;
  std::set<std::string, std::less<>> ids;
  detail::for_each_record(in, source, [&](const json& rec, std::size_t line) {
    const std::string at = detail::where(source, line);
    const auto id_it = rec.find("id");
    const auto score_it = rec.find("score");
    const auto mem_it = rec.find("members");
    if (id_it == rec.end() || !id_it->is_string()) throw error(errc::malformed_line, at + ": missing string 'id'");
    if (score_it == rec.end() || !score_it->is_number()) {
      throw error(errc::malformed_line, at + ": missing numeric 'score'");
    }
    if (mem_it == rec.end() || !mem_it->is_array()) throw error(errc::malformed_line, at + ": missing array 'members'");

    Group group;
    group.id = id_it->get<std::string>();
    group.score = score_it->get<double>();
    if (!(group.score >= 0.0 && group.score <= 1.0)) {
      throw error(errc::score_out_of_range, at + ": group '" + group.id + "' score " + score_it->dump());
    }
    if (mem_it->empty()) throw error(errc::empty_members, at + ": group '" + group.id + "'");
    for (const json& m : *mem_it) {
      if (!m.is_string()) throw error(errc::malformed_line, at + ": members must be strings");
      std::string member = m.get<std::string>();
      if (!known.contains(member)) {
        throw error(errc::unresolved_member, at + ": group '" + group.id + "' member '" + member + "'");
      }
      group.members.push_back(std::move(member));
    }
    if (const auto tags = rec.find("tags"); tags != rec.end() && !tags->is_null()) {
      if (!tags->is_array()) throw error(errc::malformed_line, at + ": tags must be an array");
      for (const json& t : *tags) {
        if (!t.is_string()) throw error(errc::malformed_line, at + ": tags must be strings");
        group.tags.push_back(t.get<std::string>());
      }
    }
    if (!ids.insert(group.id).second) throw error(errc::duplicate_id, at + ": group '" + group.id + "'");
    out.push_back(std::move(group));
  });
  return out;
}

inline std::vector<Group> load_groups(const std::filesystem::path& path, std::span<const Instance> instances) {
  auto in = detail::open_input(path);
  return load_groups(in, path.string(), instances);
}

inline Dataset load_dataset(const std::filesystem::path& instances_path, const std::filesystem::path& groups_path,
                            std::optional<std::size_t> dim = std::nullopt) {
  std::vector<Instance> instances = load_instances(instances_path, dim);
  std::vector<Group> groups = load_groups(groups_path, instances);
  return Dataset(std::move(instances), std::move(groups));
}

inline void write_instances(std::ostream& out, std::span<const Instance> instances, bool with_labels) {
  for (const Instance& inst : instances) {
    nlohmann::ordered_json rec;
    rec["id"] = inst.id();
    rec["features"] = std::vector<double>(inst.features().begin(), inst.features().end());
    if (with_labels) {
      if (const auto label = inst.true_label(evaluation_access{})) rec["label"] = *label;
    }
    out << rec.dump() << '\n';
  }
}

inline void write_groups(std::ostream& out, std::span<const Group> groups) {
  for (const Group& group : groups) {
    nlohmann::ordered_json rec;
    rec["id"] = group.id;
    rec["score"] = group.score;
    rec["members"] = group.members;
    if (!group.tags.empty()) rec["tags"] = group.tags;
    out << rec.dump() << '\n';
  }
}

// ---------------------------------------------------------------------------
// Context restriction

/// Selects groups whose id is listed or which carry any listed tag.
struct GroupSelector {
  std::set<std::string, std::less<>> ids;
  std::set<std::string, std::less<>> tags;

  [[nodiscard]] bool operator()(const Group& group) const {
    if (ids.contains(group.id)) return true;
    return std::ranges::any_of(group.tags, [&](const std::string& t) { return tags.contains(t); });
  }
};

/// Keeps the selected groups and exactly the instances they reference, both in
/// their original order.
inline Dataset filter_groups(const Dataset& dataset, const std::function<bool(const Group&)>& select) {
  std::vector<Group> groups;
  std::vector<bool> keep(dataset.num_instances(), false);
  for (std::size_t g = 0; g < dataset.num_groups(); ++g) {
    if (!select(dataset.group(g))) continue;
    const auto members = dataset.members_of(g);
    for (std::size_t k = 0; k < members.size(); ++k) {
      if (members[k] == Dataset::npos) {
        throw error(errc::unresolved_member, "group '" + dataset.group(g).id + "' member '" +
                                                 dataset.group(g).members[k] + "'");
      }
      keep[members[k]] = true;
    }
    groups.push_back(dataset.group(g));
  }
  if (groups.empty()) throw error(errc::empty_selection, "group filter selected no groups");

  std::vector<Instance> instances;
  for (std::size_t i = 0; i < keep.size(); ++i) {
    if (keep[i]) instances.push_back(dataset.instance(i));
  }
  return Dataset(std::move(instances), std::move(groups));
}

// ---------------------------------------------------------------------------
// Summary

struct DatasetStats {
  std::size_t num_instances = 0;
  std::size_t num_groups = 0;
  std::size_t dim = 0;
  double mean_group_size = 0.0;
  /// Ten equal-width score bins over [0, 1]; a score of exactly 1 lands in the last.
  std::array<std::size_t, 10> score_histogram{};
};

inline DatasetStats stats(const Dataset& dataset) {
  DatasetStats s;
  s.num_instances = dataset.num_instances();
  s.num_groups = dataset.num_groups();
  s.dim = dataset.dim();
  std::size_t total = 0;
  for (const Group& group : dataset.groups()) {
    total += group.members.size();
    const auto bin = std::min<std::size_t>(9, static_cast<std::size_t>(group.score * 10.0));
    ++s.score_histogram[bin];
  }
  if (s.num_groups > 0) s.mean_group_size = static_cast<double>(total) / static_cast<double>(s.num_groups);
  return s;
}

}  // namespace milt
