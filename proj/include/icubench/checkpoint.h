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

#ifndef ICUBENCH_CHECKPOINT_H_
#define ICUBENCH_CHECKPOINT_H_

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "icubench/ndiff.h"

namespace icubench {

// Versioned model file: a text header of "key: value" lines and tensor
// shapes, a "---" line, then every tensor as row-major little-endian
// float64 in header order.
struct Checkpoint {
  std::string format;
  int version = 1;
  std::vector<std::pair<std::string, std::string>> fields;
  std::vector<std::pair<std::string, nd::Matrix>> tensors;

  void Set(std::string key, std::string value);
  // Throws SchemaError when the key is absent.
  const std::string& Get(std::string_view key) const;
  double GetDouble(std::string_view key) const;
  long long GetInt(std::string_view key) const;
  const nd::Matrix& Tensor(std::string_view name) const;
};

void WriteCheckpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);
// Throws SchemaError on a format or version mismatch or a truncated payload.
Checkpoint ReadCheckpoint(const std::filesystem::path& path, std::string_view format,
                          int version);

}  // namespace icubench

#endif  // ICUBENCH_CHECKPOINT_H_
