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

#ifndef ICUBENCH_METRICS_H_
#define ICUBENCH_METRICS_H_

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "icubench/core.h"

namespace icubench {

// Probability that a random positive outscores a random negative, ties
// counted one half. Throws UndefinedMetricError unless both classes occur.
double AucRoc(std::span<const double> scores, std::span<const int> labels);

// Average precision: sum over descending score thresholds of
// (R_k - R_{k-1}) * P_k, each group of tied scores forming one threshold.
// Throws UndefinedMetricError without positives.
double AucPr(std::span<const double> scores, std::span<const int> labels);

// Mean absolute difference. Throws UndefinedMetricError when empty.
double Mad(std::span<const double> predictions, std::span<const double> targets);

// Cohen's kappa with linear weights |i - j| / (C - 1). Returns 1.0 when the
// expected weighted disagreement is zero (both raters constant and equal).
double LinearKappa(std::span<const int> predicted, std::span<const int> truth,
                   int num_classes = kNumLosBuckets);

struct MultilabelAucResult {
  double macro = 0.0;
  double micro = 0.0;
  // Empty entries mark labels with a single class, left out of the macro mean.
  std::vector<std::optional<double>> per_label;
  std::vector<int> excluded_labels;
};

// Row-major n x num_labels matrices.
MultilabelAucResult MultilabelAuc(std::span<const double> scores,
                                  std::span<const int> labels, int num_labels);

struct ScoredSet {
  std::vector<double> scores;
  std::vector<int> labels;
};

// Concatenates per-stay predictions into one set (micro averaging).
ScoredSet MicroPool(std::span<const ScoredSet> per_stay);

struct CiResult {
  double point = 0.0;
  double lower = 0.0;
  double upper = 0.0;
  int resamples = 0;
  // Resamples discarded because the metric was undefined on them.
  int redrawn = 0;
  std::uint64_t seed = 0;
};

// Percentile bootstrap over `units` resampling units (instances or stays).
// `metric` receives the resampled unit indices. Resample r draws from its own
// stream derived from (seed, r), so `jobs` does not change the result. The
// bounds are clamped to bracket the point estimate.
CiResult BootstrapCi(
    const std::function<double(std::span<const size_t>)>& metric,
    size_t units, int resamples, std::uint64_t seed, int jobs = 1);

struct CalibrationBin {
  double mean_predicted = 0.0;
  double observed_rate = 0.0;
  std::int64_t count = 0;
};

struct CalibrationCurve {
  std::vector<CalibrationBin> bins;
  // Requested bins that collapsed into a neighbour because of tied scores.
  int merged_bins = 0;
};

// Quantile bins of the predicted probabilities; tied scores never straddle a
// bin boundary.
CalibrationCurve Calibration(std::span<const double> scores,
                             std::span<const int> labels, int num_bins = 10);

struct LosPrediction {
  std::int64_t stay_id = 0;
  double window_end_hours = 0.0;
  std::array<double, kNumLosBuckets> probabilities{};
  double total_los_hours = 0.0;
};

struct ExtendedLosResult {
  double auc_roc = 0.0;
  std::int64_t stays = 0;
  std::int64_t skipped_stays = 0;  // no prediction at 24 hours
  ScoredSet scored;
};

inline constexpr double kExtendedLosHours = 7.0 * 24.0;
inline constexpr double kExtendedLosPredictionHour = 24.0;

// Score = predicted mass of the buckets covering seven days or more, taken
// at the 24-hour prediction; label = total LOS of at least seven days.
ExtendedLosResult ExtendedLosAuc(std::span<const LosPrediction> predictions);

// Pearson correlation with pairwise deletion of missing entries. Empty when
// fewer than two complete pairs remain or a column has zero variance.
std::optional<double> Pearson(std::span<const std::optional<double>> x,
                              std::span<const std::optional<double>> y);

struct CorrelationMatrix {
  std::vector<std::string> names;
  std::vector<std::vector<std::optional<double>>> values;
};

// Per-stay label columns: ihm, decomp_any, mean_remaining_los, then the 25
// phenotype bits. Absent targets become missing entries.
CorrelationMatrix TaskLabelCorrelations(std::span<const MultitaskTargets> stays);

std::string FormatCorrelationCsv(const CorrelationMatrix& matrix);
std::string FormatCalibrationCsv(const CalibrationCurve& curve);

}  // namespace icubench

#endif  // ICUBENCH_METRICS_H_
