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

#include "icubench/checkpoint.h"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "block_config.h"
#include "icubench/csv.h"
#include "icubench/error.h"

namespace icubench {
namespace {

static_assert(std::endian::native == std::endian::little,
              "checkpoint payloads are little-endian");

constexpr std::string_view kSeparator = "---";

}  // namespace

void Checkpoint::Set(std::string key, std::string value) {
  for (auto& [k, v] : fields) {
    if (k == key) {
      v = std::move(value);
      return;
    }
  }
  fields.emplace_back(std::move(key), std::move(value));
}

const std::string& Checkpoint::Get(std::string_view key) const {
  for (const auto& [k, v] : fields) {
    if (k == key) return v;
  }
  throw SchemaError(format + " checkpoint lacks field '" + std::string(key) + "'");
}

double Checkpoint::GetDouble(std::string_view key) const {
  const auto value = internal::ParseDouble(Get(key));
  if (!value) throw SchemaError("checkpoint field '" + std::string(key) + "' is not a number");
  return *value;
}

long long Checkpoint::GetInt(std::string_view key) const {
  const auto value = internal::ParseInt(Get(key));
  if (!value) throw SchemaError("checkpoint field '" + std::string(key) + "' is not an integer");
  return *value;
}

const nd::Matrix& Checkpoint::Tensor(std::string_view name) const {
  for (const auto& [n, m] : tensors) {
    if (n == name) return m;
  }
  throw SchemaError(format + " checkpoint lacks tensor '" + std::string(name) + "'");
}

void WriteCheckpoint(const Checkpoint& checkpoint, const std::filesystem::path& path) {
  std::ostringstream header;
  header << "format: " << checkpoint.format << "\n";
  header << "version: " << checkpoint.version << "\n";
  for (const auto& [k, v] : checkpoint.fields) {
    if (k.find_first_of(":\n") != std::string::npos || v.find('\n') != std::string::npos) {
      throw ContractError("checkpoint field '" + k + "' is not representable");
    }
    header << k << ": " << v << "\n";
  }
  for (const auto& [name, m] : checkpoint.tensors) {
    header << "tensor: " << name << " " << m.rows() << " " << m.cols() << "\n";
  }
  header << kSeparator << "\n";
  std::ofstream out(path, std::ios::binary);
  const std::string text = header.str();
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& [name, m] : checkpoint.tensors) {
    out.write(reinterpret_cast<const char*>(m.data()),
              static_cast<std::streamsize>(m.size() * sizeof(double)));
  }
  if (!out) throw IoError("cannot write checkpoint " + path.string());
}

Checkpoint ReadCheckpoint(const std::filesystem::path& path, std::string_view format,
                          int version) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  Checkpoint checkpoint;
  std::vector<std::pair<std::string, std::pair<long long, long long>>> shapes;
  std::string line;
  bool terminated = false;
  while (std::getline(in, line)) {
    if (line == kSeparator) {
      terminated = true;
      break;
    }
    const size_t colon = line.find(':');
    if (colon == std::string::npos) {
      throw SchemaError(path.string() + ": malformed header line '" + line + "'");
    }
    const std::string key(internal::Trim(std::string_view(line).substr(0, colon)));
    const std::string value(internal::Trim(std::string_view(line).substr(colon + 1)));
    if (key == "format") {
      checkpoint.format = value;
    } else if (key == "version") {
      const auto v = internal::ParseInt(value);
      if (!v) throw SchemaError(path.string() + ": bad version");
      checkpoint.version = static_cast<int>(*v);
    } else if (key == "tensor") {
      std::istringstream fields(value);
      std::string name;
      long long rows = -1, cols = -1;
      if (!(fields >> name >> rows >> cols) || rows < 0 || cols < 0) {
        throw SchemaError(path.string() + ": malformed tensor line '" + line + "'");
      }
      shapes.push_back({name, {rows, cols}});
    } else {
      checkpoint.fields.emplace_back(key, value);
    }
  }
  if (!terminated) throw SchemaError(path.string() + ": header is not terminated");
  if (checkpoint.format != format) {
    throw SchemaError(path.string() + ": expected a " + std::string(format) +
                      " checkpoint, found '" + checkpoint.format + "'");
  }
  if (checkpoint.version != version) {
    throw SchemaError(path.string() + ": unsupported version " +
                      std::to_string(checkpoint.version));
  }
  for (const auto& [name, shape] : shapes) {
    nd::Matrix m(shape.first, shape.second);
    in.read(reinterpret_cast<char*>(m.data()),
            static_cast<std::streamsize>(m.size() * sizeof(double)));
    if (!in) throw SchemaError(path.string() + ": truncated tensor '" + name + "'");
    checkpoint.tensors.emplace_back(name, std::move(m));
  }
  if (in.peek() != std::char_traits<char>::eof()) {
    throw SchemaError(path.string() + ": trailing bytes after payload");
  }
  return checkpoint;
}

}  // namespace icubench
