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

#ifndef ICUBENCH_CSV_H_
#define ICUBENCH_CSV_H_

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace icubench {

// RFC-4180 reader: comma separated, '"' quoting with "" escapes, quoted
// fields may span lines. The first record is the header.
class CsvReader {
 public:
  explicit CsvReader(const std::filesystem::path& path);
  static CsvReader FromString(std::string text, std::string source);

  const std::vector<std::string>& header() const { return header_; }
  // Throws SchemaError naming the column when it is absent.
  int ColumnIndex(std::string_view name) const;
  bool HasColumn(std::string_view name) const;

  // Reads the next record into `row`; returns false at end of input.
  // Records whose field count differs from the header throw SchemaError.
  bool Next(std::vector<std::string>& row);

  // 1-based record number of the last record returned (header is 1).
  std::int64_t record_number() const { return record_number_; }
  const std::string& source() const { return source_; }

 private:
  CsvReader(std::string text, std::string source);
  bool ReadRecord(std::vector<std::string>& fields);

  std::string text_;
  std::string source_;
  size_t pos_ = 0;
  std::int64_t record_number_ = 0;
  std::vector<std::string> header_;
};

class CsvWriter {
 public:
  explicit CsvWriter(const std::filesystem::path& path);

  void WriteRow(std::span<const std::string> fields);
  void WriteRow(std::initializer_list<std::string> fields);
  void Close();

 private:
  std::ofstream out_;
  std::filesystem::path path_;
};

// Quotes a field when it holds a comma, quote, CR or LF.
std::string CsvEscape(std::string_view field);

// Shortest round-trip decimal form of `value`.
std::string FormatDouble(double value);

}  // namespace icubench

#endif  // ICUBENCH_CSV_H_
