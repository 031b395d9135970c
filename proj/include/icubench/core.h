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

#ifndef ICUBENCH_CORE_H_
#define ICUBENCH_CORE_H_

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace icubench {

inline constexpr int kNumVariables = 17;
inline constexpr int kNumValueDims = 59;
inline constexpr int kNumInputDims = kNumValueDims + kNumVariables;  // 76
inline constexpr int kNumPhenotypes = 25;
inline constexpr int kNumLosBuckets = 10;

// Seconds since 1970-01-01T00:00:00 (no time zone).
using Timestamp = std::int64_t;

enum class VariableKind { kContinuous, kCategorical };

// One clinical variable of the benchmark input. Continuous variables carry a
// valid range for outlier rejection; categorical variables carry their
// category codes, which are one-hot encoded in that order.
struct VariableSpec {
  int id = 0;
  std::string name;
  VariableKind kind = VariableKind::kContinuous;
  std::vector<std::string> categories;
  // Numeric reading of each category, used by summary statistics. Defaults to
  // the category index when the config does not list scores.
  std::vector<double> category_scores;
  std::string normal_value;
  double valid_lo = 0.0;
  double valid_hi = 0.0;
  std::string unit;
  // Source item codes (CHARTEVENTS.ITEMID) that map to this variable.
  std::vector<std::int64_t> item_ids;

  bool is_categorical() const { return kind == VariableKind::kCategorical; }
  // Number of value dimensions: 1 for continuous, cardinality otherwise.
  int ValueWidth() const;
  std::optional<int> CategoryIndex(std::string_view code) const;
  double NormalNumeric() const;
  int NormalCategory() const;

  bool operator==(const VariableSpec&) const = default;
};

// The validated set of 17 variables plus the derived channel layout.
class VariableTable {
 public:
  explicit VariableTable(std::vector<VariableSpec> specs);

  int size() const { return static_cast<int>(specs_.size()); }
  const VariableSpec& operator[](int i) const { return specs_[i]; }
  const std::vector<VariableSpec>& specs() const { return specs_; }

  // Offset of variable i's value block inside the 59 value dims.
  int value_offset(int i) const { return value_offsets_[i]; }
  int value_dims() const { return value_dims_; }
  int input_dims() const { return value_dims_ + size(); }
  // Column of variable i's mask inside the 76-wide input vector.
  int mask_column(int i) const { return value_dims_ + i; }

  std::optional<int> VariableForItem(std::int64_t item_id) const;
  std::optional<int> FindByName(std::string_view name) const;

 private:
  std::vector<VariableSpec> specs_;
  std::vector<int> value_offsets_;
  int value_dims_ = 0;
  std::unordered_map<std::int64_t, int> item_to_variable_;
};

// Parses the line-oriented variable config (see config/variables.cfg for the
// schema). Throws ConfigError with the offending line.
std::vector<VariableSpec> ParseVariableConfig(std::string_view text,
                                              const std::string& source);
std::vector<VariableSpec> LoadVariableConfig(const std::filesystem::path& path);
std::string SerializeVariableConfig(std::span<const VariableSpec> specs);

// The shipped config/variables.cfg, compiled into the library.
const VariableTable& DefaultVariables();
std::string_view DefaultVariableConfigText();

// Remaining-LOS buckets, in days: [0,1) [1,2) ... [7,8) [8,14) [14,inf).
inline constexpr std::array<double, 9> kLosBucketEdgesDays = {1, 2, 3, 4, 5,
                                                              6, 7, 8, 14};
// Throws DomainError for negative or non-finite input.
int Bucketize(double days);
// Index of the first bucket whose interval starts at or after 7 days.
inline constexpr int kFirstExtendedLosBucket = 7;

enum class Task { kIhm, kDecomp, kLos, kPheno };

const char* TaskName(Task task);
Task ParseTask(std::string_view name);

struct TimelineEvent {
  double hours = 0.0;  // since ICU intime
  int variable = 0;
  double value = 0.0;  // category index for categorical variables

  bool operator==(const TimelineEvent&) const = default;
};

struct EpisodeTimeline {
  std::int64_t stay_id = 0;
  std::int64_t patient_id = 0;
  std::int64_t admission_id = 0;
  Timestamp intime = 0;
  std::optional<Timestamp> outtime;
  std::optional<double> los_hours;
  double age_years = 0.0;
  bool mortality_inhospital = false;
  // Hours from intime to death; set iff mortality_inhospital.
  std::optional<double> dod_hours;
  std::vector<std::string> diagnoses;
  std::vector<TimelineEvent> events;  // ascending by hours
};

// One prediction sample. Only the fields of `task` are meaningful.
struct TaskInstance {
  std::int64_t stay_id = 0;
  std::int64_t patient_id = 0;
  Task task = Task::kIhm;
  double window_end_hours = 0.0;
  int label = 0;              // m (IHM) or d_tau (decomp)
  double los_hours = 0.0;     // remaining LOS (LOS task)
  int los_bucket = 0;         // Bucketize(los_hours / 24)
  std::vector<int> phenotypes;  // kNumPhenotypes bits (pheno task)
};

// Per-stay grouped targets for deep supervision and multitask training.
// Step t (0-based) is the prediction made after t+1 hours of data.
struct MultitaskTargets {
  int steps = 0;
  std::vector<std::uint8_t> decomp_present;
  std::vector<std::uint8_t> decomp;
  bool ihm_present = false;
  int ihm = 0;
  std::vector<std::uint8_t> los_present;
  std::vector<double> los_hours;
  std::vector<int> los_bucket;
  bool pheno_present = false;
  std::vector<int> phenotypes;
};

}  // namespace icubench

#endif  // ICUBENCH_CORE_H_
