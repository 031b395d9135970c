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

#ifndef ICUBENCH_SRC_BLOCK_CONFIG_H_
#define ICUBENCH_SRC_BLOCK_CONFIG_H_

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace icubench::internal {

struct ConfigEntry {
  std::string key;
  std::string value;
  int line = 0;
};

// One "[header]" block of "key: value" lines.
struct ConfigBlock {
  int line = 0;
  std::vector<ConfigEntry> entries;

  const ConfigEntry* Find(std::string_view key) const;
};

// Splits text into blocks introduced by "[<header>]". Comments (#) and blank
// lines are skipped; anything else outside a block, or a line without ':', is
// a ConfigError. Duplicate keys within a block are rejected.
std::vector<ConfigBlock> ParseConfigBlocks(std::string_view text,
                                           std::string_view header,
                                           const std::string& source);

std::vector<std::string> SplitCommaList(std::string_view text);
std::string_view Trim(std::string_view text);

std::optional<double> ParseDouble(std::string_view text);
std::optional<long long> ParseInt(std::string_view text);

}  // namespace icubench::internal

#endif  // ICUBENCH_SRC_BLOCK_CONFIG_H_
