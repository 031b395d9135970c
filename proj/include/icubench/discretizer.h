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

#ifndef ICUBENCH_DISCRETIZER_H_
#define ICUBENCH_DISCRETIZER_H_

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "icubench/core.h"
#include "icubench/ndiff.h"

namespace icubench {

struct DiscretizerConfig {
  double step_hours = 1.0;
};

// Regular grid of input vectors. Columns of `x`: the value blocks of all
// variables in table order (59), then one mask per variable (17).
struct DiscretizedSeq {
  nd::Matrix x;
  // Fingerprint of the standardizer applied to `x`, 0 while raw.
  std::uint64_t standardized_with = 0;

  int steps() const { return static_cast<int>(x.rows()); }
};

// Number of steps covering [0, window_end): ceil(window_end / step), with a
// tolerance of 1e-9 steps for rounding in the division.
int StepCount(double window_end_hours, double step_hours);

// Bins events with hours in [0, window_end) into StepCount(window_end, step)
// steps. The last event of a bin wins; empty bins repeat the previous bin or
// fall back to the variable's normal value. Throws DomainError when the
// window holds no step.
DiscretizedSeq Discretize(const EpisodeTimeline& episode, double window_end_hours,
                          const VariableTable& variables,
                          const DiscretizerConfig& config = {});

// Per-dimension z-scoring of the continuous value columns.
class Standardizer {
 public:
  Standardizer() = default;
  Standardizer(std::vector<int> columns, std::vector<double> means,
               std::vector<double> stds);

  // Population mean and std over every step of every sequence. Columns with
  // zero spread get std 1.
  static Standardizer Fit(std::span<const DiscretizedSeq> train,
                          const VariableTable& variables);

  // Throws ContractError if `seq` was already standardized.
  void Apply(DiscretizedSeq& seq) const;
  DiscretizedSeq Applied(DiscretizedSeq seq) const;

  const std::vector<int>& columns() const { return columns_; }
  const std::vector<double>& means() const { return means_; }
  const std::vector<double>& stds() const { return stds_; }
  std::uint64_t fingerprint() const { return fingerprint_; }
  bool fitted() const { return !columns_.empty(); }

  std::string Serialize() const;
  static Standardizer Parse(std::string_view text, const std::string& source);

 private:
  std::vector<int> columns_;
  std::vector<double> means_;
  std::vector<double> stds_;
  std::uint64_t fingerprint_ = 0;
};

// One line per input column: "<index>\t<value|mask>\t<variable>\t<category>".
std::string ChannelManifest(const VariableTable& variables);
void WriteChannelManifest(const VariableTable& variables,
                          const std::filesystem::path& path);

// Columns of variable i inside the 76-wide input: its mask followed by its
// value block, the per-variable stream of the channel-wise model.
std::vector<int> ChannelColumns(const VariableTable& variables, int variable);

}  // namespace icubench

#endif  // ICUBENCH_DISCRETIZER_H_
