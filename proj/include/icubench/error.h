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

#ifndef ICUBENCH_ERROR_H_
#define ICUBENCH_ERROR_H_

#include <stdexcept>
#include <string>

namespace icubench {

// Coarse error categories. The CLI maps each one to a distinct exit code.
enum class ErrorCategory {
  kInternal,
  kDomain,
  kConfig,
  kSchema,
  kIo,
  kShape,
  kUndefinedMetric,
  kContract,
  kNumeric,
  kUsage,
  kTestSplitRefused,
};

const char* ErrorCategoryName(ErrorCategory category);

class Error : public std::runtime_error {
 public:
  Error(ErrorCategory category, const std::string& message)
      : std::runtime_error(message), category_(category) {}

  ErrorCategory category() const { return category_; }

 private:
  ErrorCategory category_;
};

// Argument outside the mathematical domain of an operation.
class DomainError : public Error {
 public:
  explicit DomainError(const std::string& message)
      : Error(ErrorCategory::kDomain, message) {}
};

// Malformed configuration file. `line` is 1-based, 0 when not applicable.
class ConfigError : public Error {
 public:
  ConfigError(const std::string& source, int line, const std::string& message)
      : Error(ErrorCategory::kConfig,
              source + ":" + std::to_string(line) + ": " + message),
        line_(line) {}

  int line() const { return line_; }

 private:
  int line_;
};

class SchemaError : public Error {
 public:
  explicit SchemaError(const std::string& message)
      : Error(ErrorCategory::kSchema, message) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& message)
      : Error(ErrorCategory::kIo, message) {}
};

class ShapeError : public Error {
 public:
  explicit ShapeError(const std::string& message)
      : Error(ErrorCategory::kShape, message) {}
};

// A metric is not defined on the given input (e.g. AUC with one class).
class UndefinedMetricError : public Error {
 public:
  explicit UndefinedMetricError(const std::string& message)
      : Error(ErrorCategory::kUndefinedMetric, message) {}
};

// A caller broke an API contract (wrong call order, forbidden option combo).
class ContractError : public Error {
 public:
  explicit ContractError(const std::string& message)
      : Error(ErrorCategory::kContract, message) {}
};

class NumericError : public Error {
 public:
  explicit NumericError(const std::string& message)
      : Error(ErrorCategory::kNumeric, message) {}
};

}  // namespace icubench

#endif  // ICUBENCH_ERROR_H_
