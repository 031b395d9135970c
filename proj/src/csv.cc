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

#include "icubench/csv.h"

#include <charconv>
#include <sstream>

#include "icubench/error.h"

namespace icubench {

namespace {

std::string ReadWholeFile(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

}  // namespace

CsvReader::CsvReader(const std::filesystem::path& path)
    : CsvReader(ReadWholeFile(path), path.string()) {}

CsvReader CsvReader::FromString(std::string text, std::string source) {
  return CsvReader(std::move(text), std::move(source));
}

CsvReader::CsvReader(std::string text, std::string source)
    : text_(std::move(text)), source_(std::move(source)) {
  if (!ReadRecord(header_)) {
    throw SchemaError(source_ + ": missing header row");
  }
}

int CsvReader::ColumnIndex(std::string_view name) const {
  for (size_t i = 0; i < header_.size(); ++i) {
    if (header_[i] == name) return static_cast<int>(i);
  }
  throw SchemaError(source_ + ": missing column '" + std::string(name) + "'");
}

bool CsvReader::HasColumn(std::string_view name) const {
  for (const auto& column : header_) {
    if (column == name) return true;
  }
  return false;
}

bool CsvReader::Next(std::vector<std::string>& row) {
  while (true) {
    if (!ReadRecord(row)) return false;
    // Skip completely blank lines.
    if (row.size() == 1 && row[0].empty() && header_.size() != 1) continue;
    if (row.size() != header_.size()) {
      throw SchemaError(source_ + ": record " + std::to_string(record_number_) +
                        " has " + std::to_string(row.size()) +
                        " fields, header has " +
                        std::to_string(header_.size()));
    }
    return true;
  }
}

bool CsvReader::ReadRecord(std::vector<std::string>& fields) {
  fields.clear();
  if (pos_ >= text_.size()) return false;
  ++record_number_;
  std::string field;
  bool quoted = false;
  bool field_was_quoted = false;
  while (pos_ < text_.size()) {
    const char c = text_[pos_++];
    if (quoted) {
      if (c == '"') {
        if (pos_ < text_.size() && text_[pos_] == '"') {
          field += '"';
          ++pos_;
        } else {
          quoted = false;
        }
      } else {
        field += c;
      }
      continue;
    }
    if (c == '"' && field.empty() && !field_was_quoted) {
      quoted = true;
      field_was_quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(field));
      field.clear();
      field_was_quoted = false;
    } else if (c == '\n') {
      break;
    } else if (c == '\r') {
      if (pos_ < text_.size() && text_[pos_] == '\n') ++pos_;
      break;
    } else {
      field += c;
    }
  }
  if (quoted) {
    throw SchemaError(source_ + ": unterminated quote in record " +
                      std::to_string(record_number_));
  }
  fields.push_back(std::move(field));
  return true;
}

CsvWriter::CsvWriter(const std::filesystem::path& path)
    : out_(path, std::ios::binary | std::ios::trunc), path_(path) {
  if (!out_) throw IoError("cannot write " + path.string());
}

void CsvWriter::WriteRow(std::span<const std::string> fields) {
  for (size_t i = 0; i < fields.size(); ++i) {
    if (i > 0) out_.put(',');
    out_ << CsvEscape(fields[i]);
  }
  out_.put('\n');
}

void CsvWriter::WriteRow(std::initializer_list<std::string> fields) {
  WriteRow(std::span<const std::string>(fields.begin(), fields.size()));
}

void CsvWriter::Close() {
  out_.close();
  if (!out_) throw IoError("failed writing " + path_.string());
}

std::string CsvEscape(std::string_view field) {
  if (field.find_first_of(",\"\r\n") == std::string_view::npos) {
    return std::string(field);
  }
  std::string out = "\"";
  for (const char c : field) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

std::string FormatDouble(double value) {
  char buffer[64];
  const auto result = std::to_chars(buffer, buffer + sizeof(buffer), value);
  return std::string(buffer, result.ptr);
}

}  // namespace icubench
