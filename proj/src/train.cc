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

#include "icubench/train.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include "icubench/csv.h"
#include "icubench/error.h"
#include "icubench/featlin.h"
#include "icubench/metrics.h"
#include "parallel.h"

namespace icubench {
namespace {

using nd::Matrix;
using nd::Var;

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr int kChunkBatches = 50;

bool Aligned(double window, int steps, double step_hours) {
  return static_cast<double>(steps) * step_hours <= window + 1e-9;
}

// Fisher-Yates with a portable index draw.
template <typename T>
void Shuffle(std::vector<T>& v, std::mt19937_64& rng) {
  for (size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng() % i]);
}

Example EmptyExample(std::int64_t stay, int sequence, int length) {
  Example ex;
  ex.stay_id = stay;
  ex.sequence = sequence;
  ex.length = length;
  ex.decomp.assign(length, -1);
  ex.los_bucket.assign(length, -1);
  ex.los_hours.assign(length, 0.0);
  ex.step_end_hours.assign(length, 0.0);
  for (int t = 0; t < length; ++t) ex.step_end_hours[t] = t + 1.0;
  return ex;
}

void Attach(Example& ex, const TaskInstance& inst, Task task, int step) {
  if (step < 0 || step >= ex.length) throw ContractError("instance step outside its sequence");
  ex.step_end_hours[step] = inst.window_end_hours;
  switch (task) {
    case Task::kIhm:
      ex.ihm_step = step;
      ex.ihm = inst.label;
      break;
    case Task::kDecomp:
      ex.decomp[step] = static_cast<std::int8_t>(inst.label);
      break;
    case Task::kLos:
      ex.los_bucket[step] = inst.los_bucket;
      ex.los_hours[step] = inst.los_hours;
      break;
    case Task::kPheno:
      if (inst.phenotypes.size() != static_cast<size_t>(kNumPhenotypes)) {
        throw ShapeError("phenotype instance without 25 labels");
      }
      ex.pheno_step = step;
      ex.pheno = inst.phenotypes;
      break;
  }
}

// Copies the targets of `from` into `into`, growing it when needed.
void Merge(Example& into, const Example& from) {
  if (from.length > into.length) {
    into.decomp.resize(from.length, -1);
    into.los_bucket.resize(from.length, -1);
    into.los_hours.resize(from.length, 0.0);
    const int old = into.length;
    into.step_end_hours.resize(from.length);
    for (int t = old; t < from.length; ++t) into.step_end_hours[t] = from.step_end_hours[t];
    into.length = from.length;
  }
  if (from.ihm_step >= 0) {
    into.ihm_step = from.ihm_step;
    into.ihm = from.ihm;
  }
  if (from.pheno_step >= 0) {
    into.pheno_step = from.pheno_step;
    into.pheno = from.pheno;
  }
  for (int t = 0; t < from.length; ++t) {
    if (from.decomp[t] >= 0) into.decomp[t] = from.decomp[t];
    if (from.los_bucket[t] >= 0) {
      into.los_bucket[t] = from.los_bucket[t];
      into.los_hours[t] = from.los_hours[t];
    }
    if (from.decomp[t] >= 0 || from.los_bucket[t] >= 0 ||
        (t == from.ihm_step) || (t == from.pheno_step)) {
      into.step_end_hours[t] = from.step_end_hours[t];
    }
  }
}

// Binary cross-entropy term over `cols` outputs per row. `fill` sets the
// target and weight of every row of one sequence.
Var BinaryTerm(nd::Tape& tape, const Var& probs, int steps, int batch, int cols,
               const std::function<void(int b, Matrix& y, Matrix& w)>& fill) {
  Matrix y = Matrix::Zero(static_cast<Eigen::Index>(steps) * batch, cols);
  Matrix w = Matrix::Zero(y.rows(), cols);
  for (int b = 0; b < batch; ++b) fill(b, y, w);
  if (w.cwiseAbs().maxCoeff() == 0.0) return tape.Constant(Matrix::Zero(1, 1));
  return nd::WeightedBinaryCrossEntropy(probs, y, w);
}

Eigen::Index Row(int t, int b, int batch) {
  return static_cast<Eigen::Index>(t) * batch + b;
}

Var RequireHead(const Var& head, const char* name) {
  if (!head.valid()) throw ContractError(std::string("model has no ") + name + " head");
  return head;
}

struct IhmRecord {
  std::int64_t stay;
  double score;
  int label;
};
struct StepRecord {
  std::int64_t stay;
  double hour;
  size_t slot;
};

}  // namespace

bool Example::HasTargets() const {
  if (ihm_step >= 0 || pheno_step >= 0) return true;
  for (int t = 0; t < length; ++t) {
    if (decomp[t] >= 0 || los_bucket[t] >= 0) return true;
  }
  return false;
}

void SequencePool::Reserve(std::int64_t stay_id, double window_end_hours) {
  if (!seqs_.empty()) throw ContractError("sequence pool is already built");
  auto [it, inserted] = longest_.emplace(stay_id, window_end_hours);
  if (!inserted) it->second = std::max(it->second, window_end_hours);
}

int SequencePool::Add(std::int64_t stay, double window) {
  const auto [it, inserted] = index_.emplace(std::make_pair(stay, window),
                                             static_cast<int>(entries_.size()));
  if (inserted) entries_.push_back({stay, window});
  return it->second;
}

std::pair<int, int> SequencePool::Lookup(std::int64_t stay_id, double window_end_hours) {
  const auto it = longest_.find(stay_id);
  if (it == longest_.end() || window_end_hours > it->second) {
    throw ContractError("window of stay " + std::to_string(stay_id) + " was not reserved");
  }
  const int steps = StepCount(window_end_hours, config_.step_hours);
  if (window_end_hours == it->second || Aligned(window_end_hours, steps, config_.step_hours)) {
    return {Add(stay_id, it->second), steps};
  }
  if (!seqs_.empty()) throw ContractError("sequence pool is already built");
  return {Add(stay_id, window_end_hours), steps};
}

void SequencePool::Build(const EpisodeStore& store, const VariableTable& variables,
                         int jobs) {
  seqs_.assign(entries_.size(), DiscretizedSeq{});
  internal::ParallelFor(entries_.size(), jobs, [&](size_t i) {
    seqs_[i] = Discretize(store.Find(entries_[i].stay), entries_[i].window, variables, config_);
  });
}

void SequencePool::Standardize(const Standardizer& standardizer) {
  for (auto& seq : seqs_) standardizer.Apply(seq);
}

void ExampleBuilder::Reserve(std::span<const TaskInstance> instances) {
  for (const auto& inst : instances) pool_.Reserve(inst.stay_id, inst.window_end_hours);
}

std::vector<Example> ExampleBuilder::Ungrouped(std::span<const TaskInstance> instances,
                                               Task task) {
  std::vector<Example> out;
  out.reserve(instances.size());
  for (const auto& inst : instances) {
    const auto [seq, steps] = pool_.Lookup(inst.stay_id, inst.window_end_hours);
    Example ex = EmptyExample(inst.stay_id, seq, steps);
    Attach(ex, inst, task, steps - 1);
    out.push_back(std::move(ex));
  }
  return out;
}

std::vector<Example> ExampleBuilder::Grouped(
    const std::map<Task, std::vector<TaskInstance>>& instances) {
  std::vector<std::int64_t> order;
  std::map<std::int64_t, std::vector<std::pair<Task, const TaskInstance*>>> by_stay;
  for (const auto& [task, list] : instances) {
    for (const auto& inst : list) {
      auto& entry = by_stay[inst.stay_id];
      if (entry.empty()) order.push_back(inst.stay_id);
      entry.emplace_back(task, &inst);
    }
  }
  std::vector<Example> out;
  out.reserve(order.size());
  for (const auto stay : order) {
    const auto& items = by_stay[stay];
    double window = 0.0;
    for (const auto& [task, inst] : items) window = std::max(window, inst->window_end_hours);
    const auto [seq, steps] = pool_.Lookup(stay, window);
    Example ex = EmptyExample(stay, seq, steps);
    for (const auto& [task, inst] : items) {
      const int n = StepCount(inst->window_end_hours, pool_.step_hours());
      if (inst->window_end_hours != window && !Aligned(inst->window_end_hours, n, pool_.step_hours())) {
        throw ContractError("grouped training needs windows aligned to the discretization step");
      }
      Attach(ex, *inst, task, n - 1);
    }
    out.push_back(std::move(ex));
  }
  return out;
}

const std::vector<TaskWeights>& MultitaskWeightGrid() {
  static const std::vector<TaskWeights> kGrid = {
      {1.0, 1.0, 1.0, 1.0}, {4.0, 2.5, 0.3, 1.0}, {1.0, 0.4, 3.0, 1.0},
      {1.0, 0.2, 1.5, 1.0}, {0.1, 0.1, 0.5, 1.0}};
  return kGrid;
}

void LossSpec::Validate() const {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw DomainError("alpha must lie in [0, 1]");
  for (double l : {lambda.decomp, lambda.ihm, lambda.los, lambda.pheno}) {
    if (!(l >= 0.0) || !std::isfinite(l)) throw DomainError("loss weights must be >= 0");
  }
}

LossTerms ComputeLoss(nd::Tape& tape, const ModelOutputs& outputs,
                      std::span<const Example* const> batch, int steps,
                      const LossSpec& spec) {
  spec.Validate();
  const int B = static_cast<int>(batch.size());
  for (const auto* ex : batch) {
    if (ex->length > steps) throw ShapeError("example longer than the batch");
  }
  const auto wants = [&](Task t) { return spec.multitask || spec.task == t; };
  const double alpha = spec.deep_supervision && !spec.multitask ? spec.alpha : 0.0;
  LossTerms terms;

  if (wants(Task::kIhm)) {
    int n = 0;
    for (const auto* ex : batch) n += ex->ihm_step >= 0;
    terms.ihm = BinaryTerm(tape, RequireHead(outputs.ihm, "mortality"), steps, B, 1,
                           [&](int b, Matrix& y, Matrix& w) {
      const Example& ex = *batch[b];
      if (ex.ihm_step < 0) return;
      const int T = ex.ihm_step + 1;
      for (int t = 0; t < T; ++t) {
        y(Row(t, b, B), 0) = ex.ihm;
        w(Row(t, b, B), 0) += alpha / (T * static_cast<double>(n));
      }
      w(Row(ex.ihm_step, b, B), 0) += (1.0 - alpha) / n;
    });
  }
  if (wants(Task::kPheno)) {
    int n = 0;
    for (const auto* ex : batch) n += ex->pheno_step >= 0;
    const double k = kNumPhenotypes;
    terms.pheno = BinaryTerm(tape, RequireHead(outputs.pheno, "phenotype"), steps, B,
                             kNumPhenotypes, [&](int b, Matrix& y, Matrix& w) {
      const Example& ex = *batch[b];
      if (ex.pheno_step < 0) return;
      const int T = ex.pheno_step + 1;
      for (int t = 0; t < T; ++t) {
        for (int j = 0; j < kNumPhenotypes; ++j) {
          y(Row(t, b, B), j) = ex.pheno[j];
          w(Row(t, b, B), j) += alpha / (T * k * n);
        }
      }
      for (int j = 0; j < kNumPhenotypes; ++j) {
        w(Row(ex.pheno_step, b, B), j) += (1.0 - alpha) / (k * n);
      }
    });
  }
  if (wants(Task::kDecomp)) {
    int n = 0;
    for (const auto* ex : batch) {
      n += std::any_of(ex->decomp.begin(), ex->decomp.end(), [](auto d) { return d >= 0; });
    }
    terms.decomp = BinaryTerm(tape, RequireHead(outputs.decomp, "decompensation"), steps, B, 1,
                              [&](int b, Matrix& y, Matrix& w) {
      const Example& ex = *batch[b];
      const auto present =
          std::count_if(ex.decomp.begin(), ex.decomp.end(), [](auto d) { return d >= 0; });
      for (int t = 0; t < ex.length; ++t) {
        if (ex.decomp[t] < 0) continue;
        y(Row(t, b, B), 0) = ex.decomp[t];
        w(Row(t, b, B), 0) = 1.0 / (static_cast<double>(present) * n);
      }
    });
  }
  if (wants(Task::kLos)) {
    const Var los = RequireHead(outputs.los, "length-of-stay");
    int n = 0;
    for (const auto* ex : batch) {
      n += std::any_of(ex->los_bucket.begin(), ex->los_bucket.end(), [](int c) { return c >= 0; });
    }
    const Eigen::Index rows = static_cast<Eigen::Index>(steps) * B;
    std::vector<double> weights(static_cast<size_t>(rows), 0.0);
    std::vector<int> classes(static_cast<size_t>(rows), 0);
    Matrix days = Matrix::Zero(rows, 1);
    for (int b = 0; b < B; ++b) {
      const Example& ex = *batch[b];
      const auto present = std::count_if(ex.los_bucket.begin(), ex.los_bucket.end(),
                                         [](int c) { return c >= 0; });
      for (int t = 0; t < ex.length; ++t) {
        if (ex.los_bucket[t] < 0) continue;
        const auto r = static_cast<size_t>(Row(t, b, B));
        weights[r] = 1.0 / (static_cast<double>(present) * n);
        classes[r] = ex.los_bucket[t];
        days(static_cast<Eigen::Index>(r), 0) = ex.los_hours[t] / 24.0;
      }
    }
    if (n == 0) {
      terms.los = tape.Constant(Matrix::Zero(1, 1));
    } else if (spec.raw_los) {
      const Matrix w = Eigen::Map<const Matrix>(weights.data(), rows, 1);
      terms.los = nd::WeightedSquaredError(los, days, w);
    } else {
      terms.los = nd::WeightedCategoricalCrossEntropy(los, classes, weights);
    }
  }

  if (spec.multitask) {
    const Var parts[] = {nd::Scale(terms.decomp, spec.lambda.decomp),
                         nd::Scale(terms.ihm, spec.lambda.ihm),
                         nd::Scale(terms.los, spec.lambda.los),
                         nd::Scale(terms.pheno, spec.lambda.pheno)};
    terms.total = nd::Add(nd::Add(parts[0], parts[1]), nd::Add(parts[2], parts[3]));
  } else {
    switch (spec.task) {
      case Task::kIhm: terms.total = terms.ihm; break;
      case Task::kDecomp: terms.total = terms.decomp; break;
      case Task::kLos: terms.total = terms.los; break;
      case Task::kPheno: terms.total = terms.pheno; break;
    }
  }
  return terms;
}

void Adam::Step(nd::ParamStore& params) {
  for (int i = 0; i < params.size(); ++i) {
    if (!params.grad(i).allFinite()) {
      throw NumericError("non-finite gradient in parameter '" + params.name(i) + "'");
    }
  }
  if (m_.empty()) {
    for (int i = 0; i < params.size(); ++i) {
      m_.push_back(Matrix::Zero(params.value(i).rows(), params.value(i).cols()));
      v_.push_back(m_.back());
    }
  }
  if (static_cast<int>(m_.size()) != params.size()) {
    throw ShapeError("optimizer state does not match the parameter store");
  }
  ++t_;
  const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
  for (int i = 0; i < params.size(); ++i) {
    const Matrix& g = params.grad(i);
    m_[i] = config_.beta1 * m_[i] + (1.0 - config_.beta1) * g;
    v_[i] = config_.beta2 * v_[i] + (1.0 - config_.beta2) * g.cwiseProduct(g);
    params.value(i).array() -=
        config_.lr * (m_[i].array() / c1) / ((v_[i].array() / c2).sqrt() + config_.epsilon);
  }
}

Predictions Predict(SequenceModel& model, const SequencePool& pool,
                    std::span<const Example> examples, int batch_size) {
  std::vector<Example> work;
  if (!model.spec().bidirectional) {
    std::map<int, size_t> slot;
    for (const auto& ex : examples) {
      const auto [it, inserted] = slot.emplace(ex.sequence, work.size());
      if (inserted) {
        work.push_back(ex);
      } else {
        Merge(work[it->second], ex);
      }
    }
  } else {
    work.assign(examples.begin(), examples.end());
  }
  std::vector<size_t> order(work.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](size_t a, size_t b) { return work[a].length > work[b].length; });

  std::vector<IhmRecord> ihm;
  std::vector<StepRecord> decomp_keys, los_keys, pheno_keys;
  std::vector<std::pair<double, int>> decomp_vals;
  struct LosVal {
    std::array<double, kNumLosBuckets> probs{};
    double hours_pred = 0.0;
    int bucket_pred = 0;
    int bucket = 0;
    double hours = 0.0;
  };
  std::vector<LosVal> los_vals;
  std::vector<std::vector<double>> pheno_scores;
  std::vector<std::vector<int>> pheno_labels;
  const bool raw = model.spec().raw_los;

  const size_t step = static_cast<size_t>(std::max(1, batch_size));
  for (size_t begin = 0; begin < order.size(); begin += step) {
    const size_t end = std::min(order.size(), begin + step);
    std::vector<const DiscretizedSeq*> seqs;
    std::vector<int> lengths;
    for (size_t k = begin; k < end; ++k) {
      seqs.push_back(&pool.at(work[order[k]].sequence));
      lengths.push_back(work[order[k]].length);
    }
    const auto batch = MakeBatch(seqs, lengths);
    nd::Tape tape;
    const auto out = model.Forward(tape, batch);
    const int B = batch.batch;
    for (int b = 0; b < B; ++b) {
      const Example& ex = work[order[begin + b]];
      if (ex.ihm_step >= 0 && out.ihm.valid()) {
        ihm.push_back({ex.stay_id, out.ihm.value()(Row(ex.ihm_step, b, B), 0), ex.ihm});
      }
      if (ex.pheno_step >= 0 && out.pheno.valid()) {
        pheno_keys.push_back({ex.stay_id, ex.step_end_hours[ex.pheno_step], pheno_scores.size()});
        const auto row = out.pheno.value().row(Row(ex.pheno_step, b, B));
        pheno_scores.emplace_back(row.data(), row.data() + row.size());
        pheno_labels.push_back(ex.pheno);
      }
      for (int t = 0; t < ex.length; ++t) {
        if (ex.decomp[t] >= 0 && out.decomp.valid()) {
          decomp_keys.push_back({ex.stay_id, ex.step_end_hours[t], decomp_vals.size()});
          decomp_vals.emplace_back(out.decomp.value()(Row(t, b, B), 0), ex.decomp[t]);
        }
        if (ex.los_bucket[t] >= 0 && out.los.valid()) {
          LosVal v;
          v.bucket = ex.los_bucket[t];
          v.hours = ex.los_hours[t];
          const auto row = out.los.value().row(Row(t, b, B));
          if (raw) {
            v.hours_pred = 24.0 * row(0);
            v.bucket_pred = Bucketize(row(0));
          } else {
            Eigen::Index arg = 0;
            row.maxCoeff(&arg);
            v.bucket_pred = static_cast<int>(arg);
            std::copy(row.data(), row.data() + kNumLosBuckets, v.probs.begin());
          }
          los_keys.push_back({ex.stay_id, ex.step_end_hours[t], los_vals.size()});
          los_vals.push_back(v);
        }
      }
    }
  }

  const auto by_stay_hour = [](const StepRecord& a, const StepRecord& b) {
    return a.stay != b.stay ? a.stay < b.stay : a.hour < b.hour;
  };
  Predictions p;
  std::stable_sort(ihm.begin(), ihm.end(),
                   [](const IhmRecord& a, const IhmRecord& b) { return a.stay < b.stay; });
  for (const auto& r : ihm) {
    p.ihm_stay.push_back(r.stay);
    p.ihm_score.push_back(r.score);
    p.ihm_label.push_back(r.label);
  }
  std::stable_sort(decomp_keys.begin(), decomp_keys.end(), by_stay_hour);
  for (const auto& k : decomp_keys) {
    p.decomp_stay.push_back(k.stay);
    p.decomp_hour.push_back(k.hour);
    p.decomp_score.push_back(decomp_vals[k.slot].first);
    p.decomp_label.push_back(decomp_vals[k.slot].second);
  }
  std::stable_sort(los_keys.begin(), los_keys.end(), by_stay_hour);
  for (const auto& k : los_keys) {
    const auto& v = los_vals[k.slot];
    p.los_stay.push_back(k.stay);
    p.los_hour.push_back(k.hour);
    if (raw) {
      p.los_pred_hours.push_back(v.hours_pred);
    } else {
      p.los_probs.push_back(v.probs);
    }
    p.los_pred_bucket.push_back(v.bucket_pred);
    p.los_bucket.push_back(v.bucket);
    p.los_hours.push_back(v.hours);
  }
  std::stable_sort(pheno_keys.begin(), pheno_keys.end(), by_stay_hour);
  for (const auto& k : pheno_keys) {
    p.pheno_stay.push_back(k.stay);
    p.pheno_scores.insert(p.pheno_scores.end(), pheno_scores[k.slot].begin(),
                          pheno_scores[k.slot].end());
    p.pheno_labels.insert(p.pheno_labels.end(), pheno_labels[k.slot].begin(),
                          pheno_labels[k.slot].end());
  }
  return p;
}

double TaskMetric(Task task, const Predictions& p) {
  try {
    switch (task) {
      case Task::kIhm:
        return AucRoc(p.ihm_score, p.ihm_label);
      case Task::kDecomp:
        return AucRoc(p.decomp_score, p.decomp_label);
      case Task::kLos:
        if (p.los_bucket.empty()) return kNaN;
        return LinearKappa(p.los_pred_bucket, p.los_bucket);
      case Task::kPheno: {
        const auto result = MultilabelAuc(p.pheno_scores, p.pheno_labels, kNumPhenotypes);
        return result.excluded_labels.size() == static_cast<size_t>(kNumPhenotypes)
                   ? kNaN
                   : result.macro;
      }
    }
  } catch (const UndefinedMetricError&) {
    return kNaN;
  }
  return kNaN;
}

int TrainConfig::EffectiveBatchSize() const {
  if (batch_size > 0) return batch_size;
  return Grouped() ? 8 : 64;
}

std::vector<Task> TrainedTasks(const ModelSpec& spec) {
  if (spec.multitask) return {Task::kIhm, Task::kDecomp, Task::kLos, Task::kPheno};
  return {spec.task};
}

SequenceModel TrainResult::BestModel(Task task, const VariableTable& variables) const {
  const auto it = best.find(task);
  if (it == best.end()) {
    throw ContractError(std::string("no trained parameters for task ") + TaskName(task));
  }
  SequenceModel model(spec, variables);
  if (static_cast<int>(it->second.params.size()) != model.params().size()) {
    throw ShapeError("snapshot does not match the model");
  }
  for (int i = 0; i < model.params().size(); ++i) {
    model.params().value(i) = it->second.params[static_cast<size_t>(i)];
  }
  return model;
}

double TrainResult::Score() const {
  if (best.empty()) return kNaN;
  double sum = 0.0;
  for (const auto& [task, b] : best) sum += b.metric;
  return sum / static_cast<double>(best.size());
}

TrainResult TrainModel(const TrainData& data, const TrainConfig& config,
                       const std::function<void(const EpochRecord&)>& on_epoch) {
  if (!data.store || !data.variables) throw ContractError("training data is incomplete");
  config.model.Validate();
  if (config.epochs < 1) throw DomainError("epochs must be positive");
  LossSpec loss = config.loss;
  loss.task = config.model.task;
  loss.deep_supervision = config.model.deep_supervision;
  loss.multitask = config.model.multitask;
  loss.raw_los = config.model.raw_los;
  loss.Validate();
  if (config.Grouped() && config.discretizer.step_hours != 1.0 && config.model.multitask) {
    throw ContractError("multitask training needs hourly discretization");
  }

  const auto tasks = TrainedTasks(config.model);
  std::vector<std::int64_t> patients;
  for (Task t : tasks) {
    const auto it = data.instances.find(t);
    if (it == data.instances.end() || it->second.empty()) {
      throw DomainError(std::string("no training instances for task ") + TaskName(t));
    }
    for (const auto& inst : it->second) patients.push_back(inst.patient_id);
  }
  TrainResult result;
  result.spec = config.model;
  result.validation_split = SplitTrainTest(patients, config.validation_fraction, config.seed);

  std::map<Task, std::vector<TaskInstance>> train_inst, val_inst;
  for (Task t : tasks) {
    for (const auto& inst : data.instances.at(t)) {
      (result.validation_split.IsTest(inst.patient_id) ? val_inst : train_inst)[t].push_back(inst);
    }
  }
  if (config.validation_cap > 0) {
    for (auto& [t, list] : val_inst) {
      const auto keep = SubsampleIndices(list.size(), config.validation_cap,
                                         internal::StreamSeed(config.seed, 77));
      std::vector<TaskInstance> kept;
      for (size_t i : keep) kept.push_back(list[i]);
      list = std::move(kept);
    }
  }

  SequencePool pool(config.discretizer);
  ExampleBuilder builder(pool);
  for (const auto* set : {&train_inst, &val_inst}) {
    for (const auto& [t, list] : *set) builder.Reserve(list);
  }
  std::vector<Example> train, val;
  if (config.Grouped()) {
    train = builder.Grouped(train_inst);
    val = builder.Grouped(val_inst);
  } else {
    train = builder.Ungrouped(train_inst[config.model.task], config.model.task);
    val = builder.Ungrouped(val_inst[config.model.task], config.model.task);
  }
  if (train.empty()) throw DomainError("no training examples after the validation split");
  pool.Build(*data.store, *data.variables, config.jobs);

  std::set<int> train_seqs;
  for (const auto& ex : train) train_seqs.insert(ex.sequence);
  std::vector<DiscretizedSeq> fit_set;
  fit_set.reserve(train_seqs.size());
  for (int s : train_seqs) fit_set.push_back(pool.at(s));
  result.standardizer = Standardizer::Fit(fit_set, *data.variables);
  fit_set.clear();
  pool.Standardize(result.standardizer);

  SequenceModel model(config.model, *data.variables);
  Adam adam(config.adam);
  const int batch_size = config.EffectiveBatchSize();
  std::uint64_t global_batch = 0;
  int stale = 0;

  for (int epoch = 1; epoch <= config.epochs && !result.failure; ++epoch) {
    std::mt19937_64 rng(internal::StreamSeed(config.seed, static_cast<std::uint64_t>(epoch)));
    std::vector<size_t> order;
    if (config.examples_per_epoch > 0) {
      order = SubsampleIndices(train.size(), config.examples_per_epoch, rng());
    } else {
      order.resize(train.size());
      for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    }
    Shuffle(order, rng);
    // Length-bucketed batches inside shuffled chunks.
    std::vector<std::vector<size_t>> batches;
    const size_t chunk = static_cast<size_t>(batch_size) * kChunkBatches;
    for (size_t begin = 0; begin < order.size(); begin += chunk) {
      const auto first = order.begin() + static_cast<std::ptrdiff_t>(begin);
      const auto last = order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), begin + chunk));
      std::stable_sort(first, last,
                       [&](size_t a, size_t b) { return train[a].length > train[b].length; });
      for (auto it = first; it < last; it += std::min<std::ptrdiff_t>(batch_size, last - it)) {
        batches.emplace_back(it, std::min(it + batch_size, last));
      }
    }
    Shuffle(batches, rng);

    double loss_sum = 0.0;
    for (const auto& ids : batches) {
      std::vector<const DiscretizedSeq*> seqs;
      std::vector<int> lengths;
      std::vector<const Example*> exs;
      for (size_t i : ids) {
        seqs.push_back(&pool.at(train[i].sequence));
        lengths.push_back(train[i].length);
        exs.push_back(&train[i]);
      }
      const auto batch = MakeBatch(seqs, lengths);
      model.params().ZeroGrad();
      nd::Tape tape;
      const auto out = model.Forward(
          tape, batch,
          {.training = true,
           .dropout_seed = internal::StreamSeed(config.seed ^ 0xD509ULL, global_batch++)});
      const auto terms = ComputeLoss(tape, out, exs, batch.steps, loss);
      const double value = terms.total.value()(0, 0);
      if (!std::isfinite(value)) {
        result.failure = "training loss became non-finite in epoch " + std::to_string(epoch);
        break;
      }
      loss_sum += value;
      tape.Backward(terms.total);
      try {
        adam.Step(model.params());
      } catch (const NumericError& e) {
        result.failure = std::string(e.what()) + " in epoch " + std::to_string(epoch);
        break;
      }
    }
    if (result.failure) break;

    EpochRecord record;
    record.epoch = epoch;
    record.train_loss = loss_sum / static_cast<double>(std::max<size_t>(1, batches.size()));
    const auto preds = Predict(model, pool, val);
    bool improved = false;
    for (Task t : tasks) {
      const double metric = TaskMetric(t, preds);
      record.validation[t] = metric;
      auto it = result.best.find(t);
      if (std::isfinite(metric) && (it == result.best.end() || !(metric <= it->second.metric))) {
        BestEpoch best{epoch, metric, {}};
        for (int i = 0; i < model.params().size(); ++i) {
          best.params.push_back(model.params().value(i));
        }
        result.best[t] = std::move(best);
        improved = true;
      }
    }
    result.history.push_back(record);
    if (on_epoch) on_epoch(record);
    stale = improved ? 0 : stale + 1;
    if (config.patience > 0 && stale >= config.patience) break;
  }
  // Tasks whose metric never became defined keep the final parameters.
  for (Task t : tasks) {
    if (result.best.contains(t)) continue;
    BestEpoch last{static_cast<int>(result.history.size()), kNaN, {}};
    for (int i = 0; i < model.params().size(); ++i) last.params.push_back(model.params().value(i));
    result.best[t] = std::move(last);
  }
  return result;
}

std::string FormatHistoryCsv(const TrainResult& result) {
  const auto tasks = TrainedTasks(result.spec);
  std::string out = "epoch,train_loss";
  for (Task t : tasks) out += std::string(",val_") + TaskName(t);
  out += "\n";
  for (const auto& r : result.history) {
    out += std::to_string(r.epoch) + "," + FormatDouble(r.train_loss);
    for (Task t : tasks) {
      const auto it = r.validation.find(t);
      out += "," + (it == r.validation.end() ? std::string() : FormatDouble(it->second));
    }
    out += "\n";
  }
  return out;
}

std::vector<TrainConfig> ExpandGrid(const TrainConfig& base, const GridAxis& grid) {
  const bool channelwise = base.model.arch == Arch::kChannelwise;
  const std::vector<int> units = channelwise ? grid.channel_units
                                             : std::vector<int>{base.model.channel_units};
  const std::vector<TaskWeights> lambdas =
      base.model.multitask && !grid.lambdas.empty() ? grid.lambdas
                                                    : std::vector<TaskWeights>{base.loss.lambda};
  std::vector<TrainConfig> out;
  for (int layers : grid.layers) {
    for (int hidden : grid.hidden) {
      for (double dropout : grid.dropout) {
        for (int cu : units) {
          for (const auto& lambda : lambdas) {
            TrainConfig c = base;
            c.model.layers = layers;
            c.model.hidden = hidden;
            c.model.dropout = dropout;
            c.model.channel_units = cu;
            c.loss.lambda = lambda;
            out.push_back(c);
          }
        }
      }
    }
  }
  return out;
}

std::vector<GridEntry> GridSearch(const TrainData& data, std::span<const TrainConfig> configs,
                                  int jobs) {
  if (configs.empty()) throw DomainError("grid search needs at least one configuration");
  std::vector<GridEntry> entries(configs.size());
  internal::ParallelFor(configs.size(), jobs, [&](size_t i) {
    entries[i].config_index = static_cast<int>(i);
    entries[i].config = configs[i];
    entries[i].result = TrainModel(data, configs[i]);
  });
  const auto key = [](const GridEntry& e) {
    const double s = e.result.Score();
    return std::isfinite(s) ? s : -std::numeric_limits<double>::infinity();
  };
  std::stable_sort(entries.begin(), entries.end(),
                   [&](const GridEntry& a, const GridEntry& b) { return key(a) > key(b); });
  return entries;
}

std::string FormatRankingCsv(std::span<const GridEntry> ranking) {
  std::string out =
      "rank,config,arch,layers,hidden,dropout,channel_units,lambda_decomp,lambda_ihm,"
      "lambda_los,lambda_pheno,score,epochs_run\n";
  int rank = 1;
  for (const auto& e : ranking) {
    const auto& m = e.config.model;
    const auto& l = e.config.loss.lambda;
    out += std::to_string(rank++) + "," + std::to_string(e.config_index) + "," +
           ArchName(m.arch) + "," + std::to_string(m.layers) + "," + std::to_string(m.hidden) +
           "," + FormatDouble(m.dropout) + "," + std::to_string(m.channel_units) + "," +
           FormatDouble(l.decomp) + "," + FormatDouble(l.ihm) + "," + FormatDouble(l.los) + "," +
           FormatDouble(l.pheno) + "," + FormatDouble(e.result.Score()) + "," +
           std::to_string(e.result.history.size()) + "\n";
  }
  return out;
}

}  // namespace icubench
