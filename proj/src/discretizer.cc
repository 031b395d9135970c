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

#include "icubench/discretizer.h"

#include <cmath>
#include <cstring>
#include <fstream>

#include "block_config.h"
#include "icubench/csv.h"
#include "icubench/error.h"
#include "parallel.h"

namespace icubench {
namespace {

std::uint64_t Fingerprint(const std::vector<int>& columns,
                          const std::vector<double>& means,
                          const std::vector<double>& stds) {
  std::uint64_t h = 0x6A09E667F3BCC908ULL;
  const auto mix = [&h](std::uint64_t v) { h = internal::SplitMix64(h ^ v); };
  for (int c : columns) mix(static_cast<std::uint64_t>(c));
  for (const auto* values : {&means, &stds}) {
    for (double v : *values) {
      std::uint64_t bits;
      std::memcpy(&bits, &v, sizeof bits);
      mix(bits);
    }
  }
  return h == 0 ? 1 : h;
}

void WriteValue(nd::Matrix& x, Eigen::Index row, const VariableTable& variables,
                int variable, double value) {
  const auto& spec = variables[variable];
  const int offset = variables.value_offset(variable);
  if (spec.is_categorical()) {
    x.row(row).segment(offset, spec.ValueWidth()).setZero();
    x(row, offset + static_cast<int>(value)) = 1.0;
  } else {
    x(row, offset) = value;
  }
}

}  // namespace

int StepCount(double window_end_hours, double step_hours) {
  if (!(step_hours > 0.0) || !(window_end_hours > 0.0)) {
    throw DomainError("step count needs a positive window and step");
  }
  return std::max(1, static_cast<int>(std::ceil(window_end_hours / step_hours - 1e-9)));
}

DiscretizedSeq Discretize(const EpisodeTimeline& episode, double window_end_hours,
                          const VariableTable& variables,
                          const DiscretizerConfig& config) {
  if (!(config.step_hours > 0.0) || !std::isfinite(config.step_hours)) {
    throw DomainError("discretizer step must be positive");
  }
  if (!(window_end_hours > 0.0) || !std::isfinite(window_end_hours)) {
    throw DomainError("cannot discretize an empty window (stay " +
                      std::to_string(episode.stay_id) + ")");
  }
  const Eigen::Index steps = StepCount(window_end_hours, config.step_hours);
  const int nvars = variables.size();
  const int value_dims = variables.value_dims();

  // Last observation per (bin, variable); -1 when the bin is empty.
  std::vector<double> last(static_cast<size_t>(steps) * nvars, 0.0);
  std::vector<char> observed(static_cast<size_t>(steps) * nvars, 0);
  for (const auto& e : episode.events) {
    if (e.hours < 0.0 || e.hours >= window_end_hours) continue;
    const auto bin = std::min<Eigen::Index>(
        static_cast<Eigen::Index>(std::floor(e.hours / config.step_hours)), steps - 1);
    const size_t k = static_cast<size_t>(bin) * nvars + e.variable;
    last[k] = e.value;
    observed[k] = 1;
  }

  DiscretizedSeq seq;
  seq.x = nd::Matrix::Zero(steps, value_dims + nvars);
  for (int v = 0; v < nvars; ++v) {
    const auto& spec = variables[v];
    double current = spec.is_categorical() ? spec.NormalCategory() : spec.NormalNumeric();
    for (Eigen::Index t = 0; t < steps; ++t) {
      const size_t k = static_cast<size_t>(t) * nvars + v;
      if (observed[k]) {
        current = last[k];
        seq.x(t, variables.mask_column(v)) = 1.0;
      }
      WriteValue(seq.x, t, variables, v, current);
    }
  }
  return seq;
}

Standardizer::Standardizer(std::vector<int> columns, std::vector<double> means,
                           std::vector<double> stds)
    : columns_(std::move(columns)), means_(std::move(means)), stds_(std::move(stds)) {
  if (means_.size() != columns_.size() || stds_.size() != columns_.size()) {
    throw ShapeError("standardizer: columns, means and stds differ in length");
  }
  for (double s : stds_) {
    if (!(s > 0.0) || !std::isfinite(s)) throw DomainError("standardizer: bad std");
  }
  fingerprint_ = Fingerprint(columns_, means_, stds_);
}

Standardizer Standardizer::Fit(std::span<const DiscretizedSeq> train,
                               const VariableTable& variables) {
  if (train.empty()) throw DomainError("standardizer needs training sequences");
  std::vector<int> columns;
  for (int v = 0; v < variables.size(); ++v) {
    if (!variables[v].is_categorical()) columns.push_back(variables.value_offset(v));
  }
  std::vector<double> means(columns.size(), 0.0), stds(columns.size(), 0.0);
  double n = 0.0;
  for (const auto& seq : train) {
    if (seq.standardized_with != 0) {
      throw ContractError("standardizer fitted on standardized data");
    }
    n += static_cast<double>(seq.steps());
    for (size_t c = 0; c < columns.size(); ++c) means[c] += seq.x.col(columns[c]).sum();
  }
  if (n == 0.0) throw DomainError("standardizer needs at least one step");
  for (auto& m : means) m /= n;
  for (const auto& seq : train) {
    for (size_t c = 0; c < columns.size(); ++c) {
      stds[c] += (seq.x.col(columns[c]).array() - means[c]).square().sum();
    }
  }
  for (auto& s : stds) {
    s = std::sqrt(s / n);
    if (!(s > 0.0)) s = 1.0;
  }
  return Standardizer(std::move(columns), std::move(means), std::move(stds));
}

void Standardizer::Apply(DiscretizedSeq& seq) const {
  if (!fitted()) throw ContractError("standardizer is not fitted");
  if (seq.standardized_with != 0) {
    throw ContractError("sequence is already standardized");
  }
  for (size_t c = 0; c < columns_.size(); ++c) {
    if (columns_[c] >= seq.x.cols()) throw ShapeError("standardizer: column out of range");
    seq.x.col(columns_[c]) = (seq.x.col(columns_[c]).array() - means_[c]) / stds_[c];
  }
  seq.standardized_with = fingerprint_;
}

DiscretizedSeq Standardizer::Applied(DiscretizedSeq seq) const {
  Apply(seq);
  return seq;
}

std::string Standardizer::Serialize() const {
  std::string out;
  for (size_t c = 0; c < columns_.size(); ++c) {
    out += "column: " + std::to_string(columns_[c]) + " " + FormatDouble(means_[c]) +
           " " + FormatDouble(stds_[c]) + "\n";
  }
  return out;
}

Standardizer Standardizer::Parse(std::string_view text, const std::string& source) {
  std::vector<int> columns;
  std::vector<double> means, stds;
  int line_number = 0;
  size_t pos = 0;
  while (pos < text.size()) {
    const size_t end = std::min(text.find('\n', pos), text.size());
    const auto line = internal::Trim(text.substr(pos, end - pos));
    pos = end + 1;
    ++line_number;
    if (line.empty()) continue;
    const std::string prefix = "column:";
    if (line.substr(0, prefix.size()) != prefix) {
      throw ConfigError(source, line_number, "expected 'column: <index> <mean> <std>'");
    }
    std::vector<std::string> fields;
    std::string current;
    for (char ch : line.substr(prefix.size())) {
      if (ch == ' ' || ch == '\t') {
        if (!current.empty()) fields.push_back(std::move(current));
        current.clear();
      } else {
        current += ch;
      }
    }
    if (!current.empty()) fields.push_back(std::move(current));
    const auto column = fields.size() == 3 ? internal::ParseInt(fields[0]) : std::nullopt;
    const auto mean = fields.size() == 3 ? internal::ParseDouble(fields[1]) : std::nullopt;
    const auto sd = fields.size() == 3 ? internal::ParseDouble(fields[2]) : std::nullopt;
    if (!column || !mean || !sd) {
      throw ConfigError(source, line_number, "expected 'column: <index> <mean> <std>'");
    }
    columns.push_back(static_cast<int>(*column));
    means.push_back(*mean);
    stds.push_back(*sd);
  }
  return Standardizer(std::move(columns), std::move(means), std::move(stds));
}

std::string ChannelManifest(const VariableTable& variables) {
  std::string out;
  for (int v = 0; v < variables.size(); ++v) {
    const auto& spec = variables[v];
    const int offset = variables.value_offset(v);
    if (spec.is_categorical()) {
      for (int c = 0; c < spec.ValueWidth(); ++c) {
        out += std::to_string(offset + c) + "\tvalue\t" + spec.name + "\t" +
               spec.categories[c] + "\n";
      }
    } else {
      out += std::to_string(offset) + "\tvalue\t" + spec.name + "\t\n";
    }
  }
  for (int v = 0; v < variables.size(); ++v) {
    out += std::to_string(variables.mask_column(v)) + "\tmask\t" + variables[v].name +
           "\t\n";
  }
  return out;
}

void WriteChannelManifest(const VariableTable& variables,
                          const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  out << ChannelManifest(variables);
  if (!out) throw IoError("cannot write " + path.string());
}

std::vector<int> ChannelColumns(const VariableTable& variables, int variable) {
  std::vector<int> columns = {variables.mask_column(variable)};
  const int offset = variables.value_offset(variable);
  for (int c = 0; c < variables[variable].ValueWidth(); ++c) columns.push_back(offset + c);
  return columns;
}

}  // namespace icubench
