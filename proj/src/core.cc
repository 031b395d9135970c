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

#include "icubench/core.h"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "block_config.h"
#include "icubench/error.h"
#include "icubench_default_configs.h"

namespace icubench {
namespace {

using internal::ConfigBlock;
using internal::ParseDouble;

std::string FormatNumber(double value) {
  char buffer[64];
  const auto result = std::to_chars(buffer, buffer + sizeof(buffer), value);
  return std::string(buffer, result.ptr);
}

template <typename T>
std::string JoinList(const std::vector<T>& items) {
  std::string out;
  for (size_t i = 0; i < items.size(); ++i) {
    if (i > 0) out += ',';
    if constexpr (std::is_same_v<T, std::string>) {
      out += items[i];
    } else if constexpr (std::is_same_v<T, double>) {
      out += FormatNumber(items[i]);
    } else {
      out += std::to_string(items[i]);
    }
  }
  return out;
}

VariableSpec ParseVariableBlock(const ConfigBlock& block, int id,
                                const std::string& source) {
  static const std::set<std::string> kKnownKeys = {
      "name",     "kind",     "categories", "scores", "normal_value",
      "valid_lo", "valid_hi", "unit",       "itemids"};
  for (const auto& entry : block.entries) {
    if (!kKnownKeys.contains(entry.key)) {
      throw ConfigError(source, entry.line, "unknown key '" + entry.key + "'");
    }
  }
  const auto require = [&](const char* key) -> const internal::ConfigEntry& {
    const auto* entry = block.Find(key);
    if (entry == nullptr) {
      throw ConfigError(source, block.line,
                        std::string("variable is missing '") + key + "'");
    }
    return *entry;
  };

  VariableSpec spec;
  spec.id = id;
  spec.name = require("name").value;
  if (spec.name.empty()) {
    throw ConfigError(source, require("name").line, "empty variable name");
  }
  const auto& kind = require("kind");
  if (kind.value == "continuous") {
    spec.kind = VariableKind::kContinuous;
  } else if (kind.value == "categorical") {
    spec.kind = VariableKind::kCategorical;
  } else {
    throw ConfigError(source, kind.line, "unknown kind '" + kind.value + "'");
  }
  const auto& normal = require("normal_value");
  spec.normal_value = normal.value;
  if (const auto* unit = block.Find("unit")) spec.unit = unit->value;
  if (const auto* items = block.Find("itemids")) {
    for (const auto& code : internal::SplitCommaList(items->value)) {
      const auto parsed = internal::ParseInt(code);
      if (!parsed) {
        throw ConfigError(source, items->line, "bad item id '" + code + "'");
      }
      spec.item_ids.push_back(*parsed);
    }
  }

  if (spec.is_categorical()) {
    const auto& categories = require("categories");
    spec.categories = internal::SplitCommaList(categories.value);
    if (spec.categories.empty()) {
      throw ConfigError(source, categories.line, "no categories listed");
    }
    const std::set<std::string> unique(spec.categories.begin(),
                                       spec.categories.end());
    if (unique.size() != spec.categories.size()) {
      throw ConfigError(source, categories.line, "duplicate category code");
    }
    if (const auto* scores = block.Find("scores")) {
      for (const auto& text : internal::SplitCommaList(scores->value)) {
        const auto value = ParseDouble(text);
        if (!value) {
          throw ConfigError(source, scores->line, "bad score '" + text + "'");
        }
        spec.category_scores.push_back(*value);
      }
      if (spec.category_scores.size() != spec.categories.size()) {
        throw ConfigError(source, scores->line,
                          "scores and categories differ in length");
      }
    } else {
      for (size_t i = 0; i < spec.categories.size(); ++i) {
        spec.category_scores.push_back(static_cast<double>(i));
      }
    }
    if (!spec.CategoryIndex(spec.normal_value)) {
      throw ConfigError(source, normal.line,
                        "normal_value '" + spec.normal_value +
                            "' is not one of the categories");
    }
    if (block.Find("valid_lo") || block.Find("valid_hi")) {
      throw ConfigError(source, block.line,
                        "valid range given for a categorical variable");
    }
  } else {
    if (block.Find("categories") || block.Find("scores")) {
      throw ConfigError(source, block.line,
                        "categories given for a continuous variable");
    }
    const auto& lo = require("valid_lo");
    const auto& hi = require("valid_hi");
    const auto lo_value = ParseDouble(lo.value);
    const auto hi_value = ParseDouble(hi.value);
    if (!lo_value) throw ConfigError(source, lo.line, "bad valid_lo");
    if (!hi_value) throw ConfigError(source, hi.line, "bad valid_hi");
    if (*lo_value > *hi_value) {
      throw ConfigError(source, lo.line, "valid_lo exceeds valid_hi");
    }
    spec.valid_lo = *lo_value;
    spec.valid_hi = *hi_value;
    const auto normal_value = ParseDouble(spec.normal_value);
    if (!normal_value) {
      throw ConfigError(source, normal.line, "normal_value is not a number");
    }
    if (*normal_value < spec.valid_lo || *normal_value > spec.valid_hi) {
      throw ConfigError(source, normal.line,
                        "normal_value lies outside [valid_lo, valid_hi]");
    }
  }
  return spec;
}

}  // namespace

int VariableSpec::ValueWidth() const {
  return is_categorical() ? static_cast<int>(categories.size()) : 1;
}

std::optional<int> VariableSpec::CategoryIndex(std::string_view code) const {
  const auto it = std::find(categories.begin(), categories.end(), code);
  if (it == categories.end()) return std::nullopt;
  return static_cast<int>(it - categories.begin());
}

double VariableSpec::NormalNumeric() const {
  if (is_categorical()) return category_scores[NormalCategory()];
  return *ParseDouble(normal_value);
}

int VariableSpec::NormalCategory() const {
  if (!is_categorical()) {
    throw ContractError("NormalCategory on continuous variable " + name);
  }
  return *CategoryIndex(normal_value);
}

VariableTable::VariableTable(std::vector<VariableSpec> specs)
    : specs_(std::move(specs)) {
  if (static_cast<int>(specs_.size()) != kNumVariables) {
    throw ConfigError("variables", 0,
                      "expected " + std::to_string(kNumVariables) +
                          " variables, got " + std::to_string(specs_.size()));
  }
  std::set<std::string> names;
  for (int i = 0; i < size(); ++i) {
    specs_[i].id = i;
    if (!names.insert(specs_[i].name).second) {
      throw ConfigError("variables", 0,
                        "duplicate variable name '" + specs_[i].name + "'");
    }
    value_offsets_.push_back(value_dims_);
    value_dims_ += specs_[i].ValueWidth();
    for (const auto item : specs_[i].item_ids) {
      if (!item_to_variable_.emplace(item, i).second) {
        throw ConfigError("variables", 0,
                          "item id " + std::to_string(item) +
                              " mapped to more than one variable");
      }
    }
  }
  if (value_dims_ != kNumValueDims) {
    throw ConfigError("variables", 0,
                      "value dimensions sum to " + std::to_string(value_dims_) +
                          ", expected " + std::to_string(kNumValueDims));
  }
}

std::optional<int> VariableTable::VariableForItem(std::int64_t item_id) const {
  const auto it = item_to_variable_.find(item_id);
  if (it == item_to_variable_.end()) return std::nullopt;
  return it->second;
}

std::optional<int> VariableTable::FindByName(std::string_view name) const {
  for (int i = 0; i < size(); ++i) {
    if (specs_[i].name == name) return i;
  }
  return std::nullopt;
}

std::vector<VariableSpec> ParseVariableConfig(std::string_view text,
                                              const std::string& source) {
  const auto blocks = internal::ParseConfigBlocks(text, "variable", source);
  std::vector<VariableSpec> specs;
  std::set<std::string> names;
  int value_dims = 0;
  for (size_t i = 0; i < blocks.size(); ++i) {
    auto spec = ParseVariableBlock(blocks[i], static_cast<int>(i), source);
    if (!names.insert(spec.name).second) {
      throw ConfigError(source, blocks[i].line,
                        "duplicate variable name '" + spec.name + "'");
    }
    value_dims += spec.ValueWidth();
    specs.push_back(std::move(spec));
  }
  if (static_cast<int>(blocks.size()) != kNumVariables) {
    throw ConfigError(source, blocks.empty() ? 0 : blocks.back().line,
                      "expected " + std::to_string(kNumVariables) +
                          " variables, found " + std::to_string(blocks.size()));
  }
  if (value_dims != kNumValueDims) {
    throw ConfigError(source, blocks.back().line,
                      "value dimensions sum to " + std::to_string(value_dims) +
                          ", expected " + std::to_string(kNumValueDims));
  }
  return specs;
}

std::vector<VariableSpec> LoadVariableConfig(
    const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read variable config " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return ParseVariableConfig(buffer.str(), path.string());
}

std::string SerializeVariableConfig(std::span<const VariableSpec> specs) {
  std::string out;
  for (const auto& spec : specs) {
    out += "[variable]\n";
    out += "name: " + spec.name + "\n";
    out += std::string("kind: ") +
           (spec.is_categorical() ? "categorical" : "continuous") + "\n";
    if (spec.is_categorical()) {
      out += "categories: " + JoinList(spec.categories) + "\n";
      out += "scores: " + JoinList(spec.category_scores) + "\n";
    }
    out += "normal_value: " + spec.normal_value + "\n";
    if (!spec.is_categorical()) {
      out += "valid_lo: " + FormatNumber(spec.valid_lo) + "\n";
      out += "valid_hi: " + FormatNumber(spec.valid_hi) + "\n";
    }
    out += "unit: " + spec.unit + "\n";
    out += "itemids: " + JoinList(spec.item_ids) + "\n\n";
  }
  return out;
}

std::string_view DefaultVariableConfigText() {
  return internal::kDefaultVariableConfig;
}

const VariableTable& DefaultVariables() {
  static const VariableTable table(ParseVariableConfig(
      DefaultVariableConfigText(), "<builtin>/variables.cfg"));
  return table;
}

int Bucketize(double days) {
  if (!std::isfinite(days) || days < 0.0) {
    throw DomainError("remaining LOS must be finite and >= 0, got " +
                      FormatNumber(days));
  }
  int bucket = 0;
  for (const double edge : kLosBucketEdgesDays) {
    if (days < edge) return bucket;
    ++bucket;
  }
  return bucket;
}

const char* TaskName(Task task) {
  switch (task) {
    case Task::kIhm:
      return "ihm";
    case Task::kDecomp:
      return "decomp";
    case Task::kLos:
      return "los";
    case Task::kPheno:
      return "pheno";
  }
  return "unknown";
}

Task ParseTask(std::string_view name) {
  if (name == "ihm") return Task::kIhm;
  if (name == "decomp") return Task::kDecomp;
  if (name == "los") return Task::kLos;
  if (name == "pheno") return Task::kPheno;
  throw DomainError("unknown task '" + std::string(name) + "'");
}

const char* ErrorCategoryName(ErrorCategory category) {
  switch (category) {
    case ErrorCategory::kInternal:
      return "internal";
    case ErrorCategory::kDomain:
      return "domain";
    case ErrorCategory::kConfig:
      return "config";
    case ErrorCategory::kSchema:
      return "schema";
    case ErrorCategory::kIo:
      return "io";
    case ErrorCategory::kShape:
      return "shape";
    case ErrorCategory::kUndefinedMetric:
      return "undefined_metric";
    case ErrorCategory::kContract:
      return "contract";
    case ErrorCategory::kNumeric:
      return "numeric";
    case ErrorCategory::kUsage:
      return "usage";
    case ErrorCategory::kTestSplitRefused:
      return "test_split_refused";
  }
  return "internal";
}

}  // namespace icubench
