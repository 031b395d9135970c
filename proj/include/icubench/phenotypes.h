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

#ifndef ICUBENCH_PHENOTYPES_H_
#define ICUBENCH_PHENOTYPES_H_

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace icubench {

// ICD-9 code -> phenotype label index (0..24).
class PhenotypeMap {
 public:
  struct Category {
    std::string name;
    std::string type;
    std::vector<std::string> codes;
  };

  explicit PhenotypeMap(std::vector<Category> categories);

  int size() const { return static_cast<int>(categories_.size()); }
  const Category& operator[](int i) const { return categories_[i]; }
  std::optional<int> LabelForCode(std::string_view icd9) const;

 private:
  std::vector<Category> categories_;
  std::unordered_map<std::string, int> code_to_label_;
};

PhenotypeMap ParsePhenotypeConfig(std::string_view text,
                                  const std::string& source);
PhenotypeMap LoadPhenotypeConfig(const std::filesystem::path& path);
const PhenotypeMap& DefaultPhenotypes();

}  // namespace icubench

#endif  // ICUBENCH_PHENOTYPES_H_
