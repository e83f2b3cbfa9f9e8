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

#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace milt {

/// Categories of failure raised by the library. Every thrown `milt::error`
/// carries exactly one of these so callers (and the CLI) can branch on it.
enum class errc {
  io_error,
  malformed_line,
  dimension_mismatch,
  duplicate_id,
  non_finite_feature,
  unresolved_member,
  score_out_of_range,
  empty_members,
  uncovered_instance,
  empty_selection,
  empty_dataset,
  invalid_argument,
  stale_cache,
  unsupported_version,
  corrupt_model,
  non_finite_training,
  unknown_group,
  non_binary_score,
  empty_evaluation,
  size_guard,
};

inline std::string_view to_string(errc code) noexcept {
  switch (code) {
    case errc::io_error: return "IoError";
    case errc::malformed_line: return "MalformedLine";
    case errc::dimension_mismatch: return "DimensionMismatch";
    case errc::duplicate_id: return "DuplicateId";
    case errc::non_finite_feature: return "NonFiniteFeature";
    case errc::unresolved_member: return "UnresolvedMember";
    case errc::score_out_of_range: return "ScoreOutOfRange";
    case errc::empty_members: return "EmptyMembers";
    case errc::uncovered_instance: return "UncoveredInstance";
    case errc::empty_selection: return "EmptySelection";
    case errc::empty_dataset: return "EmptyDataset";
    case errc::invalid_argument: return "InvalidArgument";
    case errc::stale_cache: return "StaleCache";
    case errc::unsupported_version: return "UnsupportedVersion";
    case errc::corrupt_model: return "CorruptModel";
    case errc::non_finite_training: return "NonFiniteTraining";
    case errc::unknown_group: return "UnknownGroup";
    case errc::non_binary_score: return "NonBinaryScore";
    case errc::empty_evaluation: return "EmptyEvaluation";
    case errc::size_guard: return "SizeGuard";
  }
  return "Unknown";
}

class error : public std::runtime_error {
 public:
  error(errc code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  [[nodiscard]] errc code() const noexcept { return code_; }

 private:
  errc code_;
};

}  // namespace milt
