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

#include "icubench/phenotypes.h"

#include <fstream>
#include <sstream>

#include "block_config.h"
#include "icubench/core.h"
#include "icubench/error.h"
#include "icubench_default_configs.h"

namespace icubench {

PhenotypeMap::PhenotypeMap(std::vector<Category> categories)
    : categories_(std::move(categories)) {
  if (static_cast<int>(categories_.size()) != kNumPhenotypes) {
    throw ConfigError("phenotypes", 0,
                      "expected " + std::to_string(kNumPhenotypes) +
                          " categories, got " +
                          std::to_string(categories_.size()));
  }
  for (int label = 0; label < size(); ++label) {
    for (const auto& code : categories_[label].codes) {
      if (!code_to_label_.emplace(code, label).second) {
        throw ConfigError("phenotypes", 0,
                          "ICD-9 code " + code + " listed in two categories");
      }
    }
  }
}

std::optional<int> PhenotypeMap::LabelForCode(std::string_view icd9) const {
  const auto it = code_to_label_.find(std::string(icd9));
  if (it == code_to_label_.end()) return std::nullopt;
  return it->second;
}

PhenotypeMap ParsePhenotypeConfig(std::string_view text,
                                  const std::string& source) {
  const auto blocks = internal::ParseConfigBlocks(text, "phenotype", source);
  std::vector<PhenotypeMap::Category> categories;
  for (const auto& block : blocks) {
    PhenotypeMap::Category category;
    for (const auto& entry : block.entries) {
      if (entry.key == "name") {
        category.name = entry.value;
      } else if (entry.key == "type") {
        category.type = entry.value;
      } else if (entry.key == "codes") {
        category.codes = internal::SplitCommaList(entry.value);
      } else {
        throw ConfigError(source, entry.line,
                          "unknown key '" + entry.key + "'");
      }
    }
    if (category.name.empty()) {
      throw ConfigError(source, block.line, "phenotype without a name");
    }
    if (category.codes.empty()) {
      throw ConfigError(source, block.line,
                        "phenotype '" + category.name + "' lists no codes");
    }
    categories.push_back(std::move(category));
  }
  if (static_cast<int>(categories.size()) != kNumPhenotypes) {
    throw ConfigError(source, blocks.empty() ? 0 : blocks.back().line,
                      "expected " + std::to_string(kNumPhenotypes) +
                          " phenotypes, found " +
                          std::to_string(categories.size()));
  }
  return PhenotypeMap(std::move(categories));
}

PhenotypeMap LoadPhenotypeConfig(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read phenotype config " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return ParsePhenotypeConfig(buffer.str(), path.string());
}

const PhenotypeMap& DefaultPhenotypes() {
  static const PhenotypeMap map = ParsePhenotypeConfig(
      internal::kDefaultPhenotypeConfig, "<builtin>/phenotypes.cfg");
  return map;
}

}  // namespace icubench
