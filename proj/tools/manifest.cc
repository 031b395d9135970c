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

#include "manifest.h"

#include <openssl/evp.h>

#include <algorithm>
#include <fstream>
#include <iterator>

#include <json.hpp>

#include "icubench/error.h"

namespace icubench::cli {
namespace fs = std::filesystem;

std::string GitBlobHash(std::string_view bytes) {
  const std::string header = "blob " + std::to_string(bytes.size()) + '\0';
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int length = 0;
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  if (ctx == nullptr || EVP_DigestInit_ex(ctx, EVP_sha1(), nullptr) != 1 ||
      EVP_DigestUpdate(ctx, header.data(), header.size()) != 1 ||
      EVP_DigestUpdate(ctx, bytes.data(), bytes.size()) != 1 ||
      EVP_DigestFinal_ex(ctx, digest, &length) != 1) {
    EVP_MD_CTX_free(ctx);
    throw Error(ErrorCategory::kInternal, "SHA-1 digest failed");
  }
  EVP_MD_CTX_free(ctx);
  static constexpr char kHex[] = "0123456789abcdef";
  std::string hex;
  for (unsigned int i = 0; i < length; ++i) {
    hex += kHex[digest[i] >> 4];
    hex += kHex[digest[i] & 15];
  }
  return hex;
}

std::string HashFile(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  const std::string bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  return GitBlobHash(bytes);
}

std::string HashDirectory(const fs::path& dir, std::string_view skip) {
  std::vector<std::string> lines;
  for (const auto& entry : fs::recursive_directory_iterator(dir)) {
    if (!entry.is_regular_file() || entry.path().filename() == skip) continue;
    lines.push_back(HashFile(entry.path()) + " " +
                    fs::relative(entry.path(), dir).generic_string() + "\n");
  }
  std::sort(lines.begin(), lines.end(), [](const std::string& a, const std::string& b) {
    return a.substr(41) < b.substr(41);
  });
  std::string listing;
  for (const auto& line : lines) listing += line;
  return GitBlobHash(listing);
}

std::string HashPath(const fs::path& path, std::string_view skip) {
  if (fs::is_directory(path)) return HashDirectory(path, skip);
  if (fs::is_regular_file(path)) return HashFile(path);
  throw IoError("missing input: " + path.string());
}

std::string RunManifest::ToJson() const {
  nlohmann::json j;
  j["subcommand"] = subcommand;
  j["arguments"] = arguments;
  j["config"] = config;
  j["seeds"] = seeds;
  j["inputs"] = inputs;
  j["outputs"] = outputs;
  return j.dump(2) + "\n";
}

void RunManifest::Write(const fs::path& path) const {
  std::ofstream out(path, std::ios::binary);
  out << ToJson();
  if (!out) throw IoError("cannot write " + path.string());
}

}  // namespace icubench::cli
