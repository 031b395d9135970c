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

#ifndef ICUBENCH_TOOLS_MANIFEST_H_
#define ICUBENCH_TOOLS_MANIFEST_H_

#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace icubench::cli {

// Git blob hash: SHA-1 of "blob <size>\0" followed by the bytes.
std::string GitBlobHash(std::string_view bytes);
std::string HashFile(const std::filesystem::path& path);
// Hash of the sorted "<blob hash> <relative path>" listing of every regular
// file below `dir`, skipping files named `skip`.
std::string HashDirectory(const std::filesystem::path& dir, std::string_view skip = {});
// File or directory hash. Throws IoError when the path does not exist.
std::string HashPath(const std::filesystem::path& path, std::string_view skip = {});

// Reproduction record of one run, written as sorted-key JSON.
struct RunManifest {
  std::string subcommand;
  std::vector<std::string> arguments;
  std::map<std::string, std::string> config;
  std::map<std::string, std::string> seeds;
  std::map<std::string, std::string> inputs;   // path -> hash
  std::map<std::string, std::string> outputs;  // path -> hash

  std::string ToJson() const;
  void Write(const std::filesystem::path& path) const;
};

}  // namespace icubench::cli

#endif  // ICUBENCH_TOOLS_MANIFEST_H_
