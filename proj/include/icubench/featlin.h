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

#ifndef ICUBENCH_FEATLIN_H_
#define ICUBENCH_FEATLIN_H_

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "icubench/core.h"
#include "icubench/dataset.h"
#include "icubench/ndiff.h"

namespace icubench {

inline constexpr int kNumSubsequences = 7;
inline constexpr int kNumStatistics = 6;
inline constexpr std::int64_t kDefaultLinearInstanceCap = 100000;

// Subsequences of the window [0, tau]: the full window, the first 10, 25 and
// 50 percent of elapsed time, then the last 50, 25 and 10 percent.
const char* SubsequenceName(int s);
// min, max, mean, std, skew, count.
const char* StatisticName(int k);

int FeatureCount(const VariableTable& variables);
int FeatureIndex(int variable, int subsequence, int statistic);
// "<variable>|<subsequence>|<statistic>" for every feature, in order.
std::vector<std::string> FeatureNames(const VariableTable& variables);

// Summary statistics of the raw values observed in [0, window_end] (both
// ends closed). Categorical values enter through their category scores. An
// empty subsequence yields six zeros.
std::vector<double> ExtractFeatures(const EpisodeTimeline& episode,
                                    double window_end_hours,
                                    const VariableTable& variables);

// One row per instance.
nd::Matrix FeatureMatrix(std::span<const TaskInstance> instances,
                         const EpisodeStore& store, const VariableTable& variables,
                         int jobs = 1);

void WriteFeatureCsv(const nd::Matrix& features,
                     std::span<const TaskInstance> instances,
                     const VariableTable& variables, const std::filesystem::path& path);

// Up to `cap` indices of [0, n), sampled without replacement and sorted.
std::vector<size_t> SubsampleIndices(size_t n, std::int64_t cap, std::uint64_t seed);

// Column z-scoring with population std; zero-spread columns get std 1.
struct FeatureScaler {
  Eigen::RowVectorXd means;
  Eigen::RowVectorXd stds;

  bool fitted() const { return means.size() > 0; }
  static FeatureScaler Fit(const nd::Matrix& features);
  nd::Matrix Apply(const nd::Matrix& features) const;
};

enum class Regularization { kL1, kL2 };
enum class LinearKind {
  kLogistic,  // independent sigmoid outputs, one classifier per column
  kSoftmax,   // one multinomial classifier over the columns
};

const char* RegularizationName(Regularization reg);
Regularization ParseRegularization(std::string_view name);

struct LinearTrainConfig {
  Regularization reg = Regularization::kL2;
  double C = 1.0;
  int max_iterations = 5000;
  double tolerance = 1e-6;
  std::uint64_t seed = 0;
};

struct LinearModel {
  LinearKind kind = LinearKind::kLogistic;
  nd::Matrix weights;        // features x outputs
  Eigen::RowVectorXd bias;   // 1 x outputs
  Regularization reg = Regularization::kL2;
  double C = 1.0;
  std::uint64_t seed = 0;
  // Applied by PredictLinear when fitted.
  FeatureScaler scaler;
  // Optimizer iterations and final stationarity measure per trained problem.
  std::vector<int> iterations;
  std::vector<double> final_gradient_norm;

  int features() const { return static_cast<int>(weights.rows()); }
  int outputs() const { return static_cast<int>(weights.cols()); }
};

// Regularized objective: mean cross-entropy plus penalty / C, where the L2
// penalty is half the squared norm and the L1 penalty the absolute sum of the
// weights. The bias is not penalized. `targets` holds 0/1 labels (logistic)
// or one-hot rows (softmax). When `grad` is given it receives the gradient,
// using sign(w) for the L1 term.
double LinearObjective(const LinearModel& model, const nd::Matrix& features,
                       const nd::Matrix& targets, LinearModel* grad = nullptr);

// Full-batch accelerated proximal gradient descent with backtracking on
// standardized features. Logistic targets with several columns train one
// independent classifier per column. Throws DomainError on non-finite input,
// naming the offending row and column.
LinearModel TrainLinear(const nd::Matrix& features, const nd::Matrix& targets,
                        LinearKind kind, const LinearTrainConfig& config);

// Fits a scaler on raw features, trains on the scaled rows and attaches it.
LinearModel FitLinear(const nd::Matrix& raw_features, const nd::Matrix& targets,
                      LinearKind kind, const LinearTrainConfig& config);

// Sigmoid or softmax probabilities, one row per input row. Throws ShapeError
// on a width mismatch.
nd::Matrix PredictLinear(const LinearModel& model, const nd::Matrix& features);

// Task-specific target matrices: one column for IHM and decompensation,
// 10 one-hot columns for LOS buckets, 25 columns for phenotypes.
nd::Matrix LinearTargets(std::span<const TaskInstance> instances, Task task);
LinearKind LinearKindFor(Task task);

void SaveLinearModel(const LinearModel& model, const std::filesystem::path& path);
LinearModel LoadLinearModel(const std::filesystem::path& path);

}  // namespace icubench

#endif  // ICUBENCH_FEATLIN_H_
