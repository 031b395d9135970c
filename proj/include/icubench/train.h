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

#ifndef ICUBENCH_TRAIN_H_
#define ICUBENCH_TRAIN_H_

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "icubench/dataset.h"
#include "icubench/discretizer.h"
#include "icubench/ndiff.h"
#include "icubench/rnn.h"

namespace icubench {

// Discretized, standardized input sequences keyed by stay. A stay's entry
// covers the longest window any example asks for; shorter windows that end on
// a bin boundary read a prefix of it.
class SequencePool {
 public:
  explicit SequencePool(DiscretizerConfig config = {}) : config_(config) {}

  // Registers a window. All windows must be reserved before any Lookup().
  void Reserve(std::int64_t stay_id, double window_end_hours);
  // Pool index serving window [0, window_end) of the stay and the number of
  // steps to read from it.
  std::pair<int, int> Lookup(std::int64_t stay_id, double window_end_hours);
  void Build(const EpisodeStore& store, const VariableTable& variables, int jobs);
  // Standardizes every sequence in place.
  void Standardize(const Standardizer& standardizer);
  const DiscretizedSeq& at(int index) const { return seqs_[static_cast<size_t>(index)]; }
  size_t size() const { return entries_.size(); }
  double step_hours() const { return config_.step_hours; }

 private:
  struct Entry {
    std::int64_t stay;
    double window;
  };
  int Add(std::int64_t stay, double window);

  std::map<std::int64_t, double> longest_;
  std::map<std::pair<std::int64_t, double>, int> index_;
  std::vector<Entry> entries_;
  std::vector<DiscretizedSeq> seqs_;
  DiscretizerConfig config_;
};

// One training or evaluation sequence and the targets attached to its steps.
// Absent per-step targets are -1.
struct Example {
  std::int64_t stay_id = 0;
  int sequence = 0;  // pool index
  int length = 0;
  int ihm_step = -1;
  int ihm = 0;
  int pheno_step = -1;
  std::vector<int> pheno;
  std::vector<std::int8_t> decomp;
  std::vector<int> los_bucket;
  std::vector<double> los_hours;
  // Hours of data behind each step's prediction.
  std::vector<double> step_end_hours;

  bool HasTargets() const;
};

// Builds examples against a pool. Ungrouped examples carry one instance each;
// grouped examples merge every instance of a stay into one sequence.
// Reserve() must see every instance set before any Build call.
class ExampleBuilder {
 public:
  explicit ExampleBuilder(SequencePool& pool) : pool_(pool) {}
  void Reserve(std::span<const TaskInstance> instances);
  std::vector<Example> Ungrouped(std::span<const TaskInstance> instances, Task task);
  // Instances of several tasks, grouped by stay in first-seen order. The
  // sequence covers the longest window among the stay's instances.
  std::vector<Example> Grouped(const std::map<Task, std::vector<TaskInstance>>& instances);

 private:
  SequencePool& pool_;
};

// Loss weights of the multitask objective.
struct TaskWeights {
  double decomp = 1.0;
  double ihm = 1.0;
  double los = 1.0;
  double pheno = 1.0;
};

// The five weight tuples (decomp, ihm, los, pheno) searched for multitask.
const std::vector<TaskWeights>& MultitaskWeightGrid();

struct LossSpec {
  Task task = Task::kIhm;
  bool deep_supervision = false;
  bool multitask = false;
  // Target replication strength for single-task deep supervision of the
  // in-hospital mortality and phenotype objectives.
  double alpha = 0.5;
  TaskWeights lambda;
  bool raw_los = false;

  void Validate() const;
};

struct LossTerms {
  nd::Var total;
  nd::Var ihm, decomp, los, pheno;
};

// Batch loss over model outputs laid out time-major with batch.size() columns
// of sequences. Per-step terms average over present steps of each sequence,
// then over sequences with at least one present target.
LossTerms ComputeLoss(nd::Tape& tape, const ModelOutputs& outputs,
                      std::span<const Example* const> batch, int steps,
                      const LossSpec& spec);

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

class Adam {
 public:
  explicit Adam(AdamConfig config = {}) : config_(config) {}
  // Applies one bias-corrected update from the store's gradients. Throws
  // NumericError naming the first parameter with a non-finite gradient; the
  // store is left unchanged in that case.
  void Step(nd::ParamStore& params);
  std::int64_t steps() const { return t_; }

 private:
  AdamConfig config_;
  std::int64_t t_ = 0;
  std::vector<nd::Matrix> m_, v_;
};

// Scores gathered at every present target.
struct Predictions {
  std::vector<std::int64_t> ihm_stay;
  std::vector<double> ihm_score;
  std::vector<int> ihm_label;

  std::vector<std::int64_t> decomp_stay;
  std::vector<double> decomp_hour;
  std::vector<double> decomp_score;
  std::vector<int> decomp_label;

  std::vector<std::int64_t> los_stay;
  std::vector<double> los_hour;
  std::vector<std::array<double, kNumLosBuckets>> los_probs;  // bucketed head only
  std::vector<double> los_pred_hours;                         // raw head only
  std::vector<int> los_pred_bucket;
  std::vector<int> los_bucket;
  std::vector<double> los_hours;

  std::vector<std::int64_t> pheno_stay;
  std::vector<double> pheno_scores;  // row-major n x 25
  std::vector<int> pheno_labels;
};

// Runs the model in evaluation mode. Left-to-right models score every stay
// once and read each instance at its step; models with backward layers run
// every example separately.
Predictions Predict(SequenceModel& model, const SequencePool& pool,
                    std::span<const Example> examples, int batch_size = 16);

// Main validation score of a task: AUC-ROC for mortality and
// decompensation, linear kappa for LOS, macro AUC-ROC for phenotypes.
// NaN when the metric is undefined on the data.
double TaskMetric(Task task, const Predictions& predictions);

struct TrainConfig {
  ModelSpec model;
  LossSpec loss;
  AdamConfig adam;
  int epochs = 10;
  // 0 picks 8 stays for grouped training and 64 instances otherwise.
  int batch_size = 0;
  // Stop after this many epochs without improvement on any task; 0 disables.
  int patience = 0;
  double validation_fraction = 0.15;
  // Random subset of training examples drawn each epoch; 0 uses all.
  std::int64_t examples_per_epoch = 0;
  // Cap on validation examples; 0 uses all.
  std::int64_t validation_cap = 0;
  DiscretizerConfig discretizer;
  std::uint64_t seed = 0;
  int jobs = 1;  // discretization threads

  int EffectiveBatchSize() const;
  bool Grouped() const { return model.deep_supervision || model.multitask; }
};

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  std::map<Task, double> validation;
};

struct BestEpoch {
  int epoch = 0;
  double metric = 0.0;
  std::vector<nd::Matrix> params;
};

struct TrainData {
  const EpisodeStore* store = nullptr;
  const VariableTable* variables = nullptr;
  // Training-split instances per task; validation patients are carved out of
  // these.
  std::map<Task, std::vector<TaskInstance>> instances;
};

struct TrainResult {
  ModelSpec spec;
  Standardizer standardizer;
  std::vector<EpochRecord> history;
  std::map<Task, BestEpoch> best;
  SplitManifest validation_split;  // test_patients holds the validation patients
  // Set when training stopped on a numerical failure.
  std::optional<std::string> failure;

  // Model with the parameters of the best epoch for `task`.
  SequenceModel BestModel(Task task, const VariableTable& variables) const;
  // Mean of the best validation metrics over the trained tasks.
  double Score() const;
};

// Tasks whose heads are trained by the model spec.
std::vector<Task> TrainedTasks(const ModelSpec& spec);

// Trains on the training split with an 85/15 patient-level validation split
// and keeps the best epoch of every task.
TrainResult TrainModel(const TrainData& data, const TrainConfig& config,
                       const std::function<void(const EpochRecord&)>& on_epoch = {});

std::string FormatHistoryCsv(const TrainResult& result);

struct GridAxis {
  std::vector<int> hidden = {16};
  std::vector<double> dropout = {0.0};
  std::vector<int> layers = {1};
  std::vector<int> channel_units = {4};
  // Multitask only; empty keeps the base weights.
  std::vector<TaskWeights> lambdas;
};

std::vector<TrainConfig> ExpandGrid(const TrainConfig& base, const GridAxis& grid);

struct GridEntry {
  int config_index = 0;
  TrainConfig config;
  TrainResult result;
};

// Trains every config (in parallel over `jobs` workers) and ranks them by
// validation score, best first; ties keep config order. Throws DomainError on
// an empty grid.
std::vector<GridEntry> GridSearch(const TrainData& data, std::span<const TrainConfig> configs,
                                  int jobs);

std::string FormatRankingCsv(std::span<const GridEntry> ranking);

}  // namespace icubench

#endif  // ICUBENCH_TRAIN_H_
