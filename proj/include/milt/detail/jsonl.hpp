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

#include <cctype>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <istream>
#include <string>
#include <string_view>

#include <json.hpp>

#include "milt/error.hpp"

namespace milt::detail {

using json = nlohmann::json;

inline std::string where(const std::string& source, std::size_t line) {
  return source + ":" + std::to_string(line);
}

// Bare NaN / Infinity tokens are emitted by some JSON writers but rejected by
// strict parsers. Spot them outside string literals so the caller can report a
// non-finite feature instead of a generic parse failure.
inline bool has_non_finite_token(std::string_view text) {
  bool in_string = false;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (in_string) {
      if (c == '\\') {
        ++i;
      } else if (c == '"') {
        in_string = false;
      }
      continue;
    }
    if (c == '"') {
      in_string = true;
      continue;
    }
    if (c == 'N' && text.substr(i, 3) == "NaN") return true;
    if (c == 'I' && text.substr(i, 8) == "Infinity") return true;
  }
  return false;
}

inline bool is_blank(std::string_view line) {
  for (char c : line) {
    if (!std::isspace(static_cast<unsigned char>(c))) return false;
  }
  return true;
}

/// Calls `fn(object, line_number)` for every non-blank line of a JSON-lines
/// stream. Parse failures are reported with `source:line`.
inline void for_each_record(std::istream& in, const std::string& source,
                            const std::function<void(const json&, std::size_t)>& fn) {
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (is_blank(line)) continue;
    json record;
    try {
      record = json::parse(line);
    } catch (const json::parse_error& e) {
      if (has_non_finite_token(line)) {
        throw error(errc::non_finite_feature, where(source, line_no) + ": non-finite number literal");
      }
      throw error(errc::malformed_line, where(source, line_no) + ": " + e.what());
    }
    if (!record.is_object()) {
      throw error(errc::malformed_line, where(source, line_no) + ": expected a JSON object");
    }
    fn(record, line_no);
  }
}

inline std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw error(errc::io_error, "cannot open '" + path.string() + "' for reading");
  return in;
}

inline std::ofstream open_output(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw error(errc::io_error, "cannot open '" + path.string() + "' for writing");
  return out;
}

// 64-bit FNV-1a. Stable across platforms, unlike std::hash.
class fnv1a {
 public:
  void update(const void* data, std::size_t size) {
    const auto* bytes = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < size; ++i) {
      state_ ^= bytes[i];
      state_ *= 0x100000001b3ULL;
    }
  }
  void update(std::string_view s) {
    const std::uint64_t n = s.size();
    update(&n, sizeof n);
    update(s.data(), s.size());
  }
  void update(double v) { update(&v, sizeof v); }

  [[nodiscard]] std::uint64_t digest() const noexcept { return state_; }

 private:
  std::uint64_t state_ = 0xcbf29ce484222325ULL;
};

}  // namespace milt::detail
