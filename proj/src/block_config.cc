/*
 * Copyright 2026 The icubench Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "block_config.h"

#include <charconv>
#include <cmath>

#include "icubench/error.h"

namespace icubench::internal {

const ConfigEntry* ConfigBlock::Find(std::string_view key) const {
  for (const auto& entry : entries) {
    if (entry.key == key) return &entry;
  }
  return nullptr;
}

std::string_view Trim(std::string_view text) {
  const auto is_space = [](char c) {
    return c == ' ' || c == '\t' || c == '\r' || c == '\n';
  };
  while (!text.empty() && is_space(text.front())) text.remove_prefix(1);
  while (!text.empty() && is_space(text.back())) text.remove_suffix(1);
  return text;
}

std::vector<std::string> SplitCommaList(std::string_view text) {
  std::vector<std::string> out;
  text = Trim(text);
  if (text.empty()) return out;
  size_t start = 0;
  while (true) {
    const size_t comma = text.find(',', start);
    const auto piece = text.substr(
        start, comma == std::string_view::npos ? std::string_view::npos
                                               : comma - start);
    out.emplace_back(Trim(piece));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

std::optional<double> ParseDouble(std::string_view text) {
  text = Trim(text);
  if (text.empty()) return std::nullopt;
  if (text.front() == '+') text.remove_prefix(1);
  double value = 0.0;
  const auto [ptr, ec] =
      std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    return std::nullopt;
  }
  if (!std::isfinite(value)) return std::nullopt;
  return value;
}

std::optional<long long> ParseInt(std::string_view text) {
  text = Trim(text);
  if (text.empty()) return std::nullopt;
  long long value = 0;
  const auto [ptr, ec] =
      std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    return std::nullopt;
  }
  return value;
}

std::vector<ConfigBlock> ParseConfigBlocks(std::string_view text,
                                           std::string_view header,
                                           const std::string& source) {
  const std::string block_header = "[" + std::string(header) + "]";
  std::vector<ConfigBlock> blocks;
  int line_number = 0;
  size_t pos = 0;
  while (pos <= text.size()) {
    const size_t end = text.find('\n', pos);
    const auto raw = text.substr(
        pos, end == std::string_view::npos ? std::string_view::npos
                                           : end - pos);
    ++line_number;
    pos = end == std::string_view::npos ? text.size() + 1 : end + 1;

    const auto line = Trim(raw);
    if (line.empty() || line.front() == '#') continue;
    if (line.front() == '[') {
      if (line != block_header) {
        throw ConfigError(source, line_number,
                          "unexpected section '" + std::string(line) + "'");
      }
      blocks.push_back(ConfigBlock{line_number, {}});
      continue;
    }
    if (blocks.empty()) {
      throw ConfigError(source, line_number,
                        "entry outside of a " + block_header + " block");
    }
    const size_t colon = line.find(':');
    if (colon == std::string_view::npos) {
      throw ConfigError(source, line_number, "expected 'key: value'");
    }
    ConfigEntry entry{std::string(Trim(line.substr(0, colon))),
                      std::string(Trim(line.substr(colon + 1))), line_number};
    if (entry.key.empty()) {
      throw ConfigError(source, line_number, "empty key");
    }
    if (blocks.back().Find(entry.key) != nullptr) {
      throw ConfigError(source, line_number, "duplicate key '" + entry.key + "'");
    }
    blocks.back().entries.push_back(std::move(entry));
  }
  return blocks;
}

}  // namespace icubench::internal
