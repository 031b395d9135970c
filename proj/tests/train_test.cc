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

#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "icubench/error.h"

namespace icubench {
namespace {

using nd::Matrix;
using nd::ParamStore;
using nd::Tape;
using nd::Var;

const VariableTable& Vars() { return DefaultVariables(); }

int HeartRate() { return *Vars().FindByName("Heart Rate"); }

double Ce(double p, int y) { return y ? -std::log(p) : -std::log(1.0 - p); }

// Stays of `hours` hours with hourly heart rate; dying stays run hot.
struct Cohort {
  EpisodeStore store;
  std::map<Task, std::vector<TaskInstance>> instances;
};

Cohort MakeCohort(int n, std::uint64_t seed, int min_hours = 50, int max_hours = 60) {
  std::mt19937_64 rng(seed);
  std::vector<EpisodeTimeline> episodes;
  Cohort c;
  for (int i = 0; i < n; ++i) {
    EpisodeTimeline ep;
    ep.stay_id = 1000 + i;
    ep.patient_id = 10 + i;
    const int hours = min_hours + static_cast<int>(rng() % (max_hours - min_hours + 1));
    ep.los_hours = hours;
    const int died = static_cast<int>(rng() % 2);
    ep.mortality_inhospital = died;
    std::normal_distribution<double> noise(0.0, 5.0);
    for (int h = 0; h < hours; ++h) {
      ep.events.push_back({h + 0.5, HeartRate(), (died ? 100.0 : 80.0) + noise(rng)});
    }
    if (hours >= 48) {
      c.instances[Task::kIhm].push_back(
          {ep.stay_id, ep.patient_id, Task::kIhm, 48.0, died, 0.0, 0, {}});
    }
    for (int h = 5; h <= hours; ++h) {
      const int label = died && hours - h <= 24;
      c.instances[Task::kDecomp].push_back(
          {ep.stay_id, ep.patient_id, Task::kDecomp, double(h), label, 0.0, 0, {}});
      const double rem = hours - h;
      c.instances[Task::kLos].push_back({ep.stay_id, ep.patient_id, Task::kLos, double(h), 0,
                                         rem, Bucketize(rem / 24.0), {}});
    }
    std::vector<int> pheno(kNumPhenotypes, 0);
    pheno[0] = died;
    pheno[1] = 1 - died;
    c.instances[Task::kPheno].push_back(
        {ep.stay_id, ep.patient_id, Task::kPheno, double(hours), 0, 0.0, 0, pheno});
    episodes.push_back(std::move(ep));
  }
  c.store = EpisodeStore(std::move(episodes), SplitManifest{});
  return c;
}

// Outputs filled with constants of the right width.
ModelOutputs ConstantOutputs(Tape& tape, int rows, double ihm, double decomp,
                             const Matrix& los, double pheno) {
  ModelOutputs out;
  out.ihm = tape.Constant(Matrix::Constant(rows, 1, ihm));
  out.decomp = tape.Constant(Matrix::Constant(rows, 1, decomp));
  out.los = tape.Constant(los.replicate(rows / los.rows(), 1));
  out.pheno = tape.Constant(Matrix::Constant(rows, kNumPhenotypes, pheno));
  return out;
}

Example BareExample(int length) {
  Example ex;
  ex.length = length;
  ex.decomp.assign(length, -1);
  ex.los_bucket.assign(length, -1);
  ex.los_hours.assign(length, 0.0);
  ex.step_end_hours.assign(length, 0.0);
  return ex;
}

Matrix UniformLos() { return Matrix::Constant(1, kNumLosBuckets, 1.0 / kNumLosBuckets); }

TEST(LossTest, BinaryCrossEntropyAtHalfIsLn2) {
  Tape tape;
  Example ex = BareExample(1);
  ex.ihm_step = 0;
  ex.ihm = 1;
  const Example* batch[] = {&ex};
  const auto terms =
      ComputeLoss(tape, ConstantOutputs(tape, 1, 0.5, 0.5, UniformLos(), 0.5), batch, 1, {});
  EXPECT_NEAR(terms.total.value()(0, 0), std::log(2.0), 1e-12);
}

TEST(LossTest, CategoricalCrossEntropyAtHalf) {
  Tape tape;
  Example ex = BareExample(1);
  ex.los_bucket[0] = 3;
  Matrix los = Matrix::Zero(1, kNumLosBuckets);
  los(0, 3) = 0.5;
  los(0, 4) = 0.5;
  LossSpec spec;
  spec.task = Task::kLos;
  const Example* batch[] = {&ex};
  const auto terms = ComputeLoss(tape, ConstantOutputs(tape, 1, 0.5, 0.5, los, 0.5), batch, 1, spec);
  EXPECT_NEAR(terms.total.value()(0, 0), -std::log(0.5), 1e-12);
}

TEST(LossTest, TargetReplicationHandCase) {
  Tape tape;
  Example ex = BareExample(2);
  ex.ihm_step = 1;
  ex.ihm = 1;
  ModelOutputs out = ConstantOutputs(tape, 2, 0.5, 0.5, UniformLos(), 0.5);
  LossSpec spec;
  spec.deep_supervision = true;
  spec.alpha = 0.5;
  const Example* batch[] = {&ex};
  EXPECT_NEAR(ComputeLoss(tape, out, batch, 2, spec).total.value()(0, 0), std::log(2.0), 1e-12);

  Matrix p(2, 1);
  p << 0.8, 0.6;
  out.ihm = tape.Constant(p);
  const double expected = 0.5 * Ce(0.6, 1) + 0.5 * 0.5 * (Ce(0.8, 1) + Ce(0.6, 1));
  EXPECT_NEAR(ComputeLoss(tape, out, batch, 2, spec).total.value()(0, 0), expected, 1e-12);
}

TEST(LossTest, ZeroAlphaEqualsPlainLoss) {
  Tape tape;
  Example a = BareExample(3), b = BareExample(2);
  a.ihm_step = 2;
  a.ihm = 1;
  b.ihm_step = 1;
  b.ihm = 0;
  ModelOutputs out = ConstantOutputs(tape, 6, 0.5, 0.5, UniformLos(), 0.5);
  Matrix p(6, 1);
  p << 0.1, 0.7, 0.3, 0.9, 0.2, 0.4;
  out.ihm = tape.Constant(p);
  const Example* batch[] = {&a, &b};
  LossSpec plain;
  LossSpec ds = plain;
  ds.deep_supervision = true;
  ds.alpha = 0.0;
  const double x = ComputeLoss(tape, out, batch, 3, plain).total.value()(0, 0);
  const double y = ComputeLoss(tape, out, batch, 3, ds).total.value()(0, 0);
  EXPECT_EQ(x, y);
  // Rows are time-major: a at rows 0, 2, 4 and b at rows 1, 3, 5.
  EXPECT_NEAR(x, 0.5 * (Ce(0.2, 1) + Ce(0.9, 0)), 1e-12);
}

TEST(LossTest, PhenotypeReplicationAveragesLabels) {
  Tape tape;
  Example ex = BareExample(2);
  ex.pheno_step = 1;
  ex.pheno.assign(kNumPhenotypes, 0);
  ex.pheno[4] = 1;
  ModelOutputs out = ConstantOutputs(tape, 2, 0.5, 0.5, UniformLos(), 0.5);
  Matrix p = Matrix::Constant(2, kNumPhenotypes, 0.25);
  p.row(1).setConstant(0.6);
  out.pheno = tape.Constant(p);
  LossSpec spec;
  spec.task = Task::kPheno;
  spec.deep_supervision = true;
  spec.alpha = 0.3;
  double last = 0.0, mean = 0.0;
  for (int k = 0; k < kNumPhenotypes; ++k) {
    const int y = k == 4;
    last += Ce(0.6, y) / kNumPhenotypes;
    mean += 0.5 * (Ce(0.25, y) + Ce(0.6, y)) / kNumPhenotypes;
  }
  const Example* batch[] = {&ex};
  EXPECT_NEAR(ComputeLoss(tape, out, batch, 2, spec).total.value()(0, 0),
              0.7 * last + 0.3 * mean, 1e-12);
}

TEST(LossTest, DecompAveragesStepsThenStays) {
  Tape tape;
  Example a = BareExample(3), b = BareExample(3);
  a.decomp = {0, -1, 1};
  b.decomp = {-1, -1, 0};
  Matrix p(6, 1);
  p << 0.1, 0.5, 0.2, 0.6, 0.7, 0.3;
  ModelOutputs out = ConstantOutputs(tape, 6, 0.5, 0.5, UniformLos(), 0.5);
  out.decomp = tape.Constant(p);
  LossSpec spec;
  spec.task = Task::kDecomp;
  const Example* batch[] = {&a, &b};
  const double expected = 0.5 * (0.5 * (Ce(0.1, 0) + Ce(0.7, 1)) + Ce(0.3, 0));
  EXPECT_NEAR(ComputeLoss(tape, out, batch, 3, spec).total.value()(0, 0), expected, 1e-12);
}

TEST(LossTest, RawLosIsSquaredErrorInDays) {
  Tape tape;
  Example ex = BareExample(2);
  ex.los_bucket = {2, 1};
  ex.los_hours = {72.0, 48.0};
  ModelOutputs out = ConstantOutputs(tape, 2, 0.5, 0.5, UniformLos(), 0.5);
  Matrix days(2, 1);
  days << 2.5, 2.5;
  out.los = tape.Constant(days);
  LossSpec spec;
  spec.task = Task::kLos;
  spec.raw_los = true;
  const Example* batch[] = {&ex};
  EXPECT_NEAR(ComputeLoss(tape, out, batch, 2, spec).total.value()(0, 0),
              0.5 * (0.25 + 0.25), 1e-12);
}

TEST(LossTest, MultitaskTotalIsWeightedSumOfTerms) {
  Example a = BareExample(3), b = BareExample(2);
  a.ihm_step = 2;
  a.ihm = 1;
  a.decomp = {0, 1, 1};
  a.los_bucket = {4, 3, 3};
  a.pheno_step = 2;
  a.pheno.assign(kNumPhenotypes, 1);
  b.decomp = {0, 0};
  b.los_bucket = {-1, 5};
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.05, 0.95);
  const auto random = [&](int r, int c) {
    Matrix m(r, c);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
    return m;
  };
  Matrix los = random(6, kNumLosBuckets);
  for (int r = 0; r < 6; ++r) los.row(r) /= los.row(r).sum();
  const Matrix ihm = random(6, 1), decomp = random(6, 1), pheno = random(6, kNumPhenotypes);
  Tape tape;
  ModelOutputs out;
  out.ihm = tape.Constant(ihm);
  out.decomp = tape.Constant(decomp);
  out.los = tape.Constant(los);
  out.pheno = tape.Constant(pheno);
  const Example* batch[] = {&a, &b};
  LossSpec multi;
  multi.multitask = true;
  multi.deep_supervision = true;
  multi.alpha = 0.9;  // ignored under multitask
  multi.lambda = {0.1, 2.5, 0.3, 1.7};
  const auto terms = ComputeLoss(tape, out, batch, 3, multi);
  double expected = 0.0;
  const std::pair<Task, double> parts[] = {{Task::kDecomp, 0.1}, {Task::kIhm, 2.5},
                                           {Task::kLos, 0.3}, {Task::kPheno, 1.7}};
  for (const auto& [task, lambda] : parts) {
    LossSpec single;
    single.task = task;
    expected += lambda * ComputeLoss(tape, out, batch, 3, single).total.value()(0, 0);
  }
  EXPECT_NEAR(terms.total.value()(0, 0), expected, 1e-12);
  // Independent oracle for the mortality term: one stay, final step only.
  EXPECT_NEAR(terms.ihm.value()(0, 0), Ce(ihm(4, 0), 1), 1e-12);
}

TEST(LossTest, ShortStayHasNoMortalityTerm) {
  Tape tape;
  Example ex = BareExample(30);
  for (int t = 0; t < 30; ++t) ex.decomp[t] = 0;
  ParamStore store;
  const int p = store.Add("ihm", Matrix::Constant(30, 1, 0.3));
  ModelOutputs out = ConstantOutputs(tape, 30, 0.5, 0.4, UniformLos(), 0.5);
  out.ihm = tape.Param(store, p);
  LossSpec spec;
  spec.multitask = true;
  const Example* batch[] = {&ex};
  const auto terms = ComputeLoss(tape, out, batch, 30, spec);
  EXPECT_EQ(terms.ihm.value()(0, 0), 0.0);
  EXPECT_NEAR(terms.total.value()(0, 0), Ce(0.4, 0), 1e-12);
  store.ZeroGrad();
  tape.Backward(terms.total);
  EXPECT_EQ(store.grad(p).cwiseAbs().maxCoeff(), 0.0);
}

TEST(LossTest, MaskedTargetsPassNoGradient) {
  Tape tape;
  Example a = BareExample(3), masked = BareExample(3);
  a.decomp = {1, -1, 0};
  ParamStore store;
  const int p = store.Add("decomp", Matrix::Constant(6, 1, 0.3));
  ModelOutputs out = ConstantOutputs(tape, 6, 0.5, 0.5, UniformLos(), 0.5);
  out.decomp = tape.Param(store, p);
  LossSpec spec;
  spec.task = Task::kDecomp;
  const Example* batch[] = {&a, &masked};
  const auto terms = ComputeLoss(tape, out, batch, 3, spec);
  store.ZeroGrad();
  tape.Backward(terms.total);
  const Matrix& g = store.grad(p);
  // Rows 1, 3, 5 belong to the target-free stay; row 2 is a masked step.
  for (int r : {1, 2, 3, 5}) EXPECT_EQ(g(r, 0), 0.0) << r;
  EXPECT_NE(g(0, 0), 0.0);
  EXPECT_NE(g(4, 0), 0.0);

  // Adding the target-free stay leaves the loss unchanged.
  Tape solo;
  ModelOutputs one = ConstantOutputs(solo, 3, 0.5, 0.3, UniformLos(), 0.5);
  const Example* only[] = {&a};
  EXPECT_NEAR(ComputeLoss(solo, one, only, 3, spec).total.value()(0, 0),
              terms.total.value()(0, 0), 1e-15);
}

TEST(LossTest, RejectsBadSpecs) {
  LossSpec spec;
  spec.alpha = 1.5;
  EXPECT_THROW(spec.Validate(), DomainError);
  spec.alpha = 0.5;
  spec.lambda.los = -1.0;
  EXPECT_THROW(spec.Validate(), DomainError);
  Tape tape;
  Example ex = BareExample(1);
  ex.ihm_step = 0;
  ModelOutputs out;
  const Example* batch[] = {&ex};
  EXPECT_THROW(ComputeLoss(tape, out, batch, 1, {}), ContractError);
}

TEST(LossTest, MultitaskWeightGridHasFiveTuples) {
  EXPECT_EQ(MultitaskWeightGrid().size(), 5u);
}

TEST(AdamTest, FirstStepMovesByLearningRate) {
  ParamStore store;
  const int i = store.Add("w", Matrix::Zero(2, 3));
  store.ZeroGrad();
  store.grad(i) << 0.5, -2.0, 1e3, -1e-2, 0.0, 7.0;
  Adam adam;
  adam.Step(store);
  const Matrix& w = store.value(i);
  for (int k : {0, 1, 2, 3, 5}) {
    EXPECT_NEAR(std::abs(w.data()[k]), 1e-3, 1e-8) << k;
    EXPECT_EQ(std::signbit(w.data()[k]), !std::signbit(store.grad(i).data()[k]));
  }
  EXPECT_EQ(w(1, 1), 0.0);
  EXPECT_EQ(adam.steps(), 1);
}

TEST(AdamTest, ZeroGradientsLeaveParametersUnchanged) {
  ParamStore store;
  const int i = store.Add("w", Matrix::Constant(3, 3, 0.7));
  Adam adam;
  for (int s = 0; s < 5; ++s) {
    store.ZeroGrad();
    adam.Step(store);
  }
  EXPECT_EQ(store.value(i), Matrix::Constant(3, 3, 0.7));
}

TEST(AdamTest, MatchesReferenceRecursion) {
  ParamStore store;
  const int i = store.Add("w", Matrix::Zero(1, 1));
  AdamConfig config{0.01, 0.8, 0.95, 1e-6};
  Adam adam(config);
  double w = 0.0, m = 0.0, v = 0.0;
  for (int t = 1; t <= 20; ++t) {
    const double g = std::sin(t) + 2.0 * w;
    store.ZeroGrad();
    store.grad(i)(0, 0) = g;
    adam.Step(store);
    m = 0.8 * m + 0.2 * g;
    v = 0.95 * v + 0.05 * g * g;
    w -= 0.01 * (m / (1 - std::pow(0.8, t))) / (std::sqrt(v / (1 - std::pow(0.95, t))) + 1e-6);
    ASSERT_NEAR(store.value(i)(0, 0), w, 1e-14);
  }
}

TEST(AdamTest, NonFiniteGradientNamesParameter) {
  ParamStore store;
  store.Add("first", Matrix::Constant(1, 2, 1.0));
  const int j = store.Add("head/ihm/W", Matrix::Constant(2, 2, 1.0));
  store.ZeroGrad();
  store.grad(0).setConstant(1.0);
  store.grad(j)(1, 0) = std::nan("");
  Adam adam;
  try {
    adam.Step(store);
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("head/ihm/W"), std::string::npos);
  }
  EXPECT_EQ(store.value(0), Matrix::Constant(1, 2, 1.0));
  EXPECT_EQ(adam.steps(), 0);
}

TEST(ExampleTest, UngroupedCarriesOneTarget) {
  const Cohort c = MakeCohort(2, 1);
  SequencePool pool;
  ExampleBuilder builder(pool);
  builder.Reserve(c.instances.at(Task::kDecomp));
  const auto examples = builder.Ungrouped(c.instances.at(Task::kDecomp), Task::kDecomp);
  ASSERT_EQ(examples.size(), c.instances.at(Task::kDecomp).size());
  const auto& first = examples.front();
  EXPECT_EQ(first.length, 5);
  EXPECT_EQ(first.decomp[4], c.instances.at(Task::kDecomp).front().label);
  for (int t = 0; t < 4; ++t) EXPECT_EQ(first.decomp[t], -1);
  // Aligned windows of one stay share a sequence.
  EXPECT_EQ(pool.size(), 2u);
}

TEST(ExampleTest, GroupedMergesTasksPerStay) {
  const Cohort c = MakeCohort(3, 2);
  SequencePool pool;
  ExampleBuilder builder(pool);
  for (const auto& [t, list] : c.instances) builder.Reserve(list);
  const auto examples = builder.Grouped(c.instances);
  ASSERT_EQ(examples.size(), 3u);
  for (const auto& ex : examples) {
    const auto& ep_hours = *c.store.Find(ex.stay_id).los_hours;
    EXPECT_EQ(ex.length, static_cast<int>(ep_hours));
    EXPECT_EQ(ex.ihm_step, 47);
    EXPECT_EQ(ex.pheno_step, ex.length - 1);
    for (int t = 0; t < 4; ++t) EXPECT_EQ(ex.decomp[t], -1);
    for (int t = 4; t < ex.length; ++t) {
      EXPECT_GE(ex.decomp[t], 0);
      EXPECT_GE(ex.los_bucket[t], 0);
    }
  }
}

TEST(ExampleTest, GroupedRejectsUnalignedWindows) {
  std::map<Task, std::vector<TaskInstance>> inst;
  inst[Task::kDecomp] = {{7, 1, Task::kDecomp, 5.5, 0, 0.0, 0, {}},
                         {7, 1, Task::kDecomp, 9.0, 0, 0.0, 0, {}}};
  SequencePool pool;
  ExampleBuilder builder(pool);
  builder.Reserve(inst[Task::kDecomp]);
  EXPECT_THROW(builder.Grouped(inst), ContractError);
  EXPECT_THROW(pool.Lookup(8, 1.0), ContractError);
}

TEST(ExampleTest, UnalignedWindowGetsOwnSequence) {
  SequencePool pool;
  pool.Reserve(7, 10.0);
  const auto a = pool.Lookup(7, 4.0);
  const auto b = pool.Lookup(7, 4.5);
  const auto c = pool.Lookup(7, 10.0);
  EXPECT_EQ(a.first, c.first);
  EXPECT_NE(a.first, b.first);
  EXPECT_EQ(a.second, 4);
  EXPECT_EQ(b.second, 5);
}

ModelSpec SmallSpec(Task task) {
  ModelSpec spec;
  spec.task = task;
  spec.hidden = 6;
  spec.seed = 5;
  return spec;
}

TEST(PredictTest, CausalGroupingMatchesSeparateRuns) {
  const Cohort c = MakeCohort(3, 4);
  SequencePool pool;
  ExampleBuilder builder(pool);
  builder.Reserve(c.instances.at(Task::kDecomp));
  const auto examples = builder.Ungrouped(c.instances.at(Task::kDecomp), Task::kDecomp);
  pool.Build(c.store, Vars(), 1);
  SequenceModel model(SmallSpec(Task::kDecomp), Vars());
  const auto grouped = Predict(model, pool, examples);
  ASSERT_EQ(grouped.decomp_score.size(), examples.size());
  for (size_t i = 0; i < examples.size(); i += 7) {
    const auto single = Predict(model, pool, std::span(&examples[i], 1));
    ASSERT_EQ(single.decomp_score.size(), 1u);
    EXPECT_NEAR(single.decomp_score[0], grouped.decomp_score[i], 1e-12);
    EXPECT_EQ(grouped.decomp_hour[i], examples[i].step_end_hours[examples[i].length - 1]);
  }
}

TEST(PredictTest, TaskMetricIsNanWhenUndefined) {
  Predictions p;
  p.ihm_score = {0.1, 0.2};
  p.ihm_label = {1, 1};
  EXPECT_TRUE(std::isnan(TaskMetric(Task::kIhm, p)));
  p.ihm_label = {0, 1};
  EXPECT_EQ(TaskMetric(Task::kIhm, p), 1.0);
  EXPECT_TRUE(std::isnan(TaskMetric(Task::kLos, p)));
}

TrainConfig SmallConfig(Task task, int epochs) {
  TrainConfig config;
  config.model = SmallSpec(task);
  config.epochs = epochs;
  config.adam.lr = 0.01;
  config.seed = 11;
  return config;
}

TEST(TrainTest, LearnsPlantedMortalitySignal) {
  const Cohort c = MakeCohort(80, 6);
  const TrainData data{&c.store, &Vars(), c.instances};
  std::vector<int> seen;
  const auto result = TrainModel(data, SmallConfig(Task::kIhm, 8),
                                 [&](const EpochRecord& r) { seen.push_back(r.epoch); });
  ASSERT_FALSE(result.failure);
  EXPECT_EQ(seen, (std::vector<int>{1, 2, 3, 4, 5, 6, 7, 8}));
  ASSERT_TRUE(result.best.contains(Task::kIhm));
  EXPECT_GT(result.best.at(Task::kIhm).metric, 0.9);
  EXPECT_LT(result.history.back().train_loss, result.history.front().train_loss);
  EXPECT_TRUE(result.standardizer.fitted());
  EXPECT_FALSE(result.validation_split.test_patients.empty());
}

TEST(TrainTest, SameSeedReproducesHistory) {
  const Cohort c = MakeCohort(30, 7);
  const TrainData data{&c.store, &Vars(), c.instances};
  auto config = SmallConfig(Task::kIhm, 2);
  config.model.dropout = 0.3;
  config.model.layers = 2;
  const auto a = TrainModel(data, config);
  const auto b = TrainModel(data, config);
  EXPECT_EQ(FormatHistoryCsv(a), FormatHistoryCsv(b));
  const auto ma = a.BestModel(Task::kIhm, Vars());
  const auto mb = b.BestModel(Task::kIhm, Vars());
  for (int i = 0; i < ma.params().size(); ++i) EXPECT_EQ(ma.params().value(i), mb.params().value(i));
}

TEST(TrainTest, DeepSupervisedDecompensationRunsToCompletion) {
  const Cohort c = MakeCohort(20, 8);
  const TrainData data{&c.store, &Vars(), c.instances};
  auto config = SmallConfig(Task::kDecomp, 2);
  config.model.deep_supervision = true;
  const auto result = TrainModel(data, config);
  EXPECT_FALSE(result.failure);
  EXPECT_EQ(result.history.size(), 2u);
  EXPECT_TRUE(std::isfinite(result.history.back().train_loss));
}

TEST(TrainTest, MultitaskKeepsBestEpochPerTask) {
  const Cohort c = MakeCohort(24, 9, 30, 60);
  const TrainData data{&c.store, &Vars(), c.instances};
  auto config = SmallConfig(Task::kIhm, 2);
  config.model.multitask = true;
  const auto result = TrainModel(data, config);
  ASSERT_FALSE(result.failure);
  EXPECT_EQ(result.best.size(), 4u);
  const std::string csv = FormatHistoryCsv(result);
  EXPECT_EQ(csv.substr(0, csv.find('\n')),
            "epoch,train_loss,val_ihm,val_decomp,val_los,val_pheno");
}

TEST(TrainTest, RejectsMissingTaskInstances) {
  const Cohort c = MakeCohort(4, 10);
  TrainData data{&c.store, &Vars(), {}};
  EXPECT_THROW(TrainModel(data, SmallConfig(Task::kIhm, 1)), DomainError);
}

TEST(GridTest, ExpandsAxes) {
  TrainConfig base = SmallConfig(Task::kIhm, 1);
  GridAxis grid;
  grid.hidden = {4, 8};
  grid.dropout = {0.0, 0.3};
  grid.channel_units = {2, 4, 8};
  EXPECT_EQ(ExpandGrid(base, grid).size(), 4u);
  base.model.arch = Arch::kChannelwise;
  EXPECT_EQ(ExpandGrid(base, grid).size(), 12u);
  base.model.multitask = true;
  grid.lambdas = MultitaskWeightGrid();
  EXPECT_EQ(ExpandGrid(base, grid).size(), 60u);
}

TEST(GridTest, SingleConfigRanksOnce) {
  const Cohort c = MakeCohort(20, 12);
  const TrainData data{&c.store, &Vars(), c.instances};
  const TrainConfig configs[] = {SmallConfig(Task::kIhm, 1)};
  const auto ranking = GridSearch(data, configs, 1);
  ASSERT_EQ(ranking.size(), 1u);
  const std::string csv = FormatRankingCsv(ranking);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 2);
  EXPECT_THROW(GridSearch(data, std::span<const TrainConfig>{}, 1), DomainError);
}

TEST(GridTest, RanksByValidationScoreAndReproduces) {
  const Cohort c = MakeCohort(60, 13);
  const TrainData data{&c.store, &Vars(), c.instances};
  auto untrained = SmallConfig(Task::kIhm, 1);
  untrained.adam.lr = 0.0;
  const TrainConfig configs[] = {untrained, SmallConfig(Task::kIhm, 6)};
  const auto ranking = GridSearch(data, configs, 2);
  ASSERT_EQ(ranking.size(), 2u);
  EXPECT_EQ(ranking[0].config_index, 1);
  EXPECT_GE(ranking[0].result.Score(), ranking[1].result.Score());
  const auto again = GridSearch(data, configs, 1);
  EXPECT_EQ(FormatRankingCsv(ranking), FormatRankingCsv(again));
}

}  // namespace
}  // namespace icubench
