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

// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// nonzero when any criterion fails. Arguments restrict the run to the listed
// criterion numbers.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "cli.h"
#include "gradcheck.h"
#include "icubench/csv.h"
#include "icubench/dataset.h"
#include "icubench/discretizer.h"
#include "icubench/featlin.h"
#include "icubench/metrics.h"
#include "icubench/pipeline.h"
#include "icubench/rnn.h"
#include "icubench/syngen.h"
#include "icubench/timeutil.h"
#include "icubench/train.h"
#include "oracles.h"
#include "test_util.h"

namespace icubench {
namespace {

namespace fs = std::filesystem;
using nd::Matrix;
using nd::ParamStore;
using nd::Tape;
using nd::Var;
using testing::CheckGradients;
using testing::RandomMatrix;
using testing::RandomProjection;
using testing::TempDir;

// Pinned tolerances.
constexpr double kGradTolerance = 1e-5;
constexpr double kFdStep = 1e-5;
constexpr double kGradBudgetSeconds = 60.0;
constexpr double kOracleTolerance = 1e-12;
constexpr double kLossTolerance = 1e-12;
constexpr double kTrainAucFloor = 0.95;
constexpr double kNonlinearMargin = 0.02;
constexpr double kNullAucLow = 0.45;
constexpr double kNullAucHigh = 0.55;
constexpr double kLearnBudgetSeconds = 300.0;
constexpr double kCalibrationGap = 0.05;

struct Verdict {
  bool pass = true;
  std::string detail;

  // Records one measured check.
  void Check(bool ok, const std::string& what) {
    pass = pass && ok;
    if (!detail.empty()) detail += "; ";
    detail += what + (ok ? "" : " [FAILED]");
  }
};

std::string Num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

double Seconds(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

const VariableTable& Vars() { return DefaultVariables(); }

// ------------------------------------------------- 1. gradient fidelity

SequenceBatch RandomBatch(std::mt19937_64& rng, const std::vector<int>& lengths) {
  std::vector<DiscretizedSeq> seqs(lengths.size());
  std::vector<const DiscretizedSeq*> ptrs;
  for (size_t b = 0; b < lengths.size(); ++b) {
    seqs[b].x = RandomMatrix(lengths[b], Vars().input_dims(), rng);
    ptrs.push_back(&seqs[b]);
  }
  return MakeBatch(ptrs, lengths);
}

Verdict GradientFidelity() {
  const auto start = std::chrono::steady_clock::now();
  std::mt19937_64 rng(101);
  std::map<std::string, double> worst;
  const auto run = [&](const std::string& name, ParamStore& params,
                       const testing::LossBuilder& build) {
    const auto r = CheckGradients(params, build, kFdStep);
    worst[name] = std::max(worst[name], r.max_relative_error);
  };

  // Primitives on random small shapes.
  using Unary = Var (*)(const Var&);
  const std::pair<const char*, Unary> unary[] = {
      {"sigmoid", nd::Sigmoid}, {"tanh", nd::Tanh}, {"relu", nd::Relu},
      {"softmax", nd::Softmax}, {"sum", nd::Sum},   {"mean", nd::Mean}};
  std::uniform_int_distribution<int> dim(1, 5);
  for (int trial = 0; trial < 5; ++trial) {
    const int n = dim(rng), k = dim(rng), m = dim(rng);
    for (const auto& [name, op] : unary) {
      ParamStore p;
      p.Add("x", RandomMatrix(n, m, rng, 2.0));
      run(name, p, [op = op](Tape& t, ParamStore& s) { return RandomProjection(op(t.Param(s, 0)), 3); });
    }
    ParamStore p;
    p.Add("a", RandomMatrix(n, k, rng));
    p.Add("b", RandomMatrix(k, m, rng));
    p.Add("bias", RandomMatrix(1, m, rng));
    p.Add("c", RandomMatrix(n, m, rng));
    run("matmul/add/sub/mul/scale", p, [](Tape& t, ParamStore& s) {
      const Var ab = nd::Add(nd::MatMul(t.Param(s, 0), t.Param(s, 1)), t.Param(s, 2));
      return RandomProjection(nd::Sub(nd::Mul(ab, t.Param(s, 3)), nd::Scale(t.Param(s, 3), 0.7)), 4);
    });
  }
  {
    ParamStore p;
    p.Add("a", RandomMatrix(6, 2, rng));
    p.Add("b", RandomMatrix(6, 3, rng));
    run("concat/slice/gather", p, [](Tape& t, ParamStore& s) {
      const std::vector<Var> parts = {t.Param(s, 0), t.Param(s, 1)};
      const Var cols = nd::SliceCols(nd::Concat(parts), 1, 3);
      const std::vector<Var> stack = {nd::SliceTime(cols, 1, 2), nd::SliceRows(cols, 3, 3)};
      const std::vector<Eigen::Index> idx = {4, 0, 0, 2};
      return RandomProjection(nd::GatherRows(nd::ConcatRows(stack), idx), 5);
    });
    ParamStore d;
    d.Add("x", RandomMatrix(4, 6, rng));
    run("dropout", d, [](Tape& t, ParamStore& s) {
      return RandomProjection(nd::Dropout(t.Param(s, 0), 0.3, 99, true), 6);
    });
    ParamStore l;
    l.Add("z", RandomMatrix(4, 3, rng, 2.0));
    const Matrix y = (RandomMatrix(4, 3, rng).array() > 0).cast<double>().matrix();
    const Matrix w = RandomMatrix(4, 3, rng).cwiseAbs();
    const std::vector<int> classes = {0, 2, 1, 2};
    const std::vector<double> cw = {0.5, 1.0, 0.3, 2.0};
    run("losses", l, [&](Tape& t, ParamStore& s) {
      const Var z = t.Param(s, 0);
      return nd::Add(nd::Add(nd::WeightedBinaryCrossEntropy(nd::Sigmoid(z), y, w),
                             nd::WeightedCategoricalCrossEntropy(nd::Softmax(z), classes, cw)),
                     nd::WeightedSquaredError(nd::Relu(z), y, w));
    });
  }

  // Full models. Loss = random projection of every head.
  const auto model_check = [&](const std::string& name, ModelSpec spec) {
    SequenceModel model(spec, Vars());
    const auto batch = RandomBatch(rng, {3, 2});
    run(name, model.params(), [&](Tape& t, ParamStore&) {
      const auto out = model.Forward(t, batch);
      Var loss = RandomProjection(out.hidden, 7);
      for (const Var* head : {&out.ihm, &out.decomp, &out.los, &out.pheno}) {
        if (head->valid()) loss = nd::Add(loss, RandomProjection(*head, 8));
      }
      return loss;
    });
  };
  ModelSpec standard;
  standard.layers = 2;
  standard.hidden = 3;
  standard.bidirectional = true;
  standard.seed = 1;
  model_check("standard LSTM", standard);
  ModelSpec channelwise = standard;
  channelwise.arch = Arch::kChannelwise;
  channelwise.layers = 1;
  channelwise.channel_units = 1;
  model_check("channel-wise LSTM", channelwise);

  // Multitask forward plus the actual multitask loss.
  ModelSpec multi;
  multi.hidden = 3;
  multi.multitask = true;
  multi.seed = 2;
  SequenceModel model(multi, Vars());
  const auto batch = RandomBatch(rng, {3, 2});
  std::vector<Example> examples(2);
  for (int b = 0; b < 2; ++b) {
    Example& ex = examples[b];
    ex.length = batch.lengths[b];
    ex.ihm_step = ex.length - 1;
    ex.ihm = b;
    ex.pheno_step = ex.length - 1;
    for (int k = 0; k < kNumPhenotypes; ++k) ex.pheno.push_back((k + b) % 2);
    ex.decomp.assign(ex.length, static_cast<std::int8_t>(b));
    ex.los_bucket.assign(ex.length, 3 + b);
    ex.los_hours.assign(ex.length, 80.0);
    ex.step_end_hours.assign(ex.length, 1.0);
  }
  const Example* ptrs[] = {&examples[0], &examples[1]};
  LossSpec loss;
  loss.multitask = true;
  loss.lambda = {0.7, 1.3, 0.4, 2.0};
  run("multitask LSTM", model.params(), [&](Tape& t, ParamStore&) {
    return ComputeLoss(t, model.Forward(t, batch), ptrs, batch.steps, loss).total;
  });

  const double elapsed = Seconds(start);
  Verdict v;
  for (const auto& [name, err] : worst) {
    v.Check(err < kGradTolerance, name + " " + Num(err));
  }
  v.Check(elapsed < kGradBudgetSeconds, "time " + Num(elapsed) + " s");
  return v;
}

// ---------------------------------------------------- 2. metric oracles

Verdict MetricOracles() {
  std::mt19937_64 rng(202);
  std::uniform_int_distribution<int> size(2, 500);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double auc_err = 0, ap_err = 0, kappa_err = 0, macro_err = 0, micro_err = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const int n = size(rng);
    std::vector<double> s(n);
    std::vector<int> y(n), pred(n), truth(n);
    for (int i = 0; i < n; ++i) {
      s[i] = std::round(u(rng) * 50) / 50;  // ties
      y[i] = u(rng) < 0.4;
      pred[i] = static_cast<int>(u(rng) * 10);
      truth[i] = static_cast<int>(u(rng) * 10);
    }
    y[0] = 0;
    y[1] = 1;
    auc_err = std::max(auc_err, std::abs(AucRoc(s, y) - testing::BruteForceAuc(s, y)));
    ap_err = std::max(ap_err, std::abs(AucPr(s, y) - testing::BruteForceAp(s, y)));
    kappa_err = std::max(kappa_err, std::abs(LinearKappa(pred, truth) -
                                             testing::BruteForceLinearKappa(pred, truth, 10)));

    const int labels = 5;
    std::vector<double> ms(n * labels);
    std::vector<int> my(n * labels);
    for (auto& x : ms) x = std::round(u(rng) * 20) / 20;
    for (auto& x : my) x = u(rng) < 0.3;
    const auto r = MultilabelAuc(ms, my, labels);
    double sum = 0;
    int used = 0;
    for (int k = 0; k < labels; ++k) {
      std::vector<double> cs;
      std::vector<int> cy;
      for (int i = 0; i < n; ++i) {
        cs.push_back(ms[i * labels + k]);
        cy.push_back(my[i * labels + k]);
      }
      const int pos = static_cast<int>(std::count(cy.begin(), cy.end(), 1));
      if (pos == 0 || pos == n) continue;
      sum += testing::BruteForceAuc(cs, cy);
      ++used;
    }
    if (used > 0) macro_err = std::max(macro_err, std::abs(r.macro - sum / used));
    const int pos = static_cast<int>(std::count(my.begin(), my.end(), 1));
    if (pos > 0 && pos < n * labels) {
      micro_err = std::max(micro_err, std::abs(r.micro - testing::BruteForceAuc(ms, my)));
    }
  }
  Verdict v;
  v.Check(auc_err <= kOracleTolerance, "auc_roc " + Num(auc_err));
  v.Check(ap_err <= kOracleTolerance, "auc_pr " + Num(ap_err));
  v.Check(kappa_err <= kOracleTolerance, "kappa " + Num(kappa_err));
  v.Check(macro_err <= kOracleTolerance, "macro " + Num(macro_err));
  v.Check(micro_err <= kOracleTolerance, "micro " + Num(micro_err));
  const std::vector<double> s1 = {0.1, 0.4, 0.35, 0.8};
  const std::vector<int> y1 = {0, 0, 1, 1};
  v.Check(AucRoc(s1, y1) == 0.75, "AUC hand case " + Num(AucRoc(s1, y1)));
  const std::vector<int> t2 = {0, 1, 2}, p2 = {0, 2, 2};
  const double kappa = LinearKappa(p2, t2, 3);
  v.Check(std::abs(kappa - 2.0 / 3.0) <= kOracleTolerance, "kappa hand case " + Num(kappa));
  const std::vector<double> s3 = {0.9, 0.8, 0.7};
  const std::vector<int> y3 = {1, 0, 1};
  const double ap = AucPr(s3, y3);
  v.Check(std::abs(ap - 5.0 / 6.0) <= kOracleTolerance, "AP hand case " + Num(ap));
  return v;
}

// -------------------------------------------------- 3. shape accounting

EpisodeTimeline RandomEpisode(std::mt19937_64& rng) {
  EpisodeTimeline ep;
  ep.stay_id = 1;
  std::uniform_real_distribution<double> hour(0.0, 100.0);
  std::uniform_int_distribution<int> var(0, Vars().size() - 1), count(0, 200);
  for (int e = count(rng); e > 0; --e) {
    const int v = var(rng);
    const auto& spec = Vars()[v];
    const double value = spec.is_categorical()
                             ? static_cast<double>(rng() % spec.categories.size())
                             : std::uniform_real_distribution<double>(0, 200)(rng);
    ep.events.push_back({hour(rng), v, value});
  }
  std::sort(ep.events.begin(), ep.events.end(),
            [](const auto& a, const auto& b) { return a.hours < b.hours; });
  return ep;
}

Verdict ShapeAccounting() {
  std::mt19937_64 rng(303);
  std::set<long> widths, feature_counts;
  std::uniform_real_distribution<double> window(0.5, 120.0);
  for (int trial = 0; trial < 300; ++trial) {
    const auto ep = RandomEpisode(rng);
    const double w = window(rng);
    widths.insert(static_cast<long>(Discretize(ep, w, Vars(), {}).x.cols()));
    feature_counts.insert(static_cast<long>(ExtractFeatures(ep, w, Vars()).size()));
  }
  Verdict v;
  v.Check(widths == std::set<long>{76}, "discretizer widths {" + std::to_string(*widths.begin()) +
                                            (widths.size() > 1 ? ",..." : "") + "}");
  v.Check(feature_counts == std::set<long>{714},
          "feature counts {" + std::to_string(*feature_counts.begin()) +
              (feature_counts.size() > 1 ? ",..." : "") + "}");
  for (int cu : {1, 2, 3, 4, 8}) {
    ModelSpec spec;
    spec.arch = Arch::kChannelwise;
    spec.channel_units = cu;
    spec.bidirectional = true;
    spec.hidden = 4;
    SequenceModel model(spec, Vars());
    const auto batch = RandomBatch(rng, {3, 2});
    Tape tape;
    const Var x = tape.Constant(batch.x);
    std::vector<Var> streams;
    for (int var = 0; var < Vars().size(); ++var) {
      std::vector<Var> cols;
      for (int c : ChannelColumns(Vars(), var)) cols.push_back(nd::SliceCols(x, c, 1));
      streams.push_back(nd::Concat(cols));
    }
    const Var u = ChannelwiseForward(tape, model.params(), model.channels(), streams, batch.batch,
                                     batch.lengths);
    v.Check(u.cols() == 34 * cu, "u_t width " + std::to_string(u.cols()) + " at cu=" +
                                     std::to_string(cu));
  }
  return v;
}

// ------------------------------------------------------ 4. loss pinning

Example Bare(int length) {
  Example ex;
  ex.length = length;
  ex.decomp.assign(length, -1);
  ex.los_bucket.assign(length, -1);
  ex.los_hours.assign(length, 0.0);
  ex.step_end_hours.assign(length, 0.0);
  return ex;
}

Verdict LossPinning() {
  Verdict v;
  {
    Tape tape;
    Example ex = Bare(2);
    ex.ihm_step = 1;
    ex.ihm = 1;
    ModelOutputs out;
    out.ihm = tape.Constant(Matrix::Constant(2, 1, 0.5));
    LossSpec spec;
    spec.deep_supervision = true;
    spec.alpha = 0.5;
    const Example* batch[] = {&ex};
    const double l = ComputeLoss(tape, out, batch, 2, spec).total.value()(0, 0);
    v.Check(std::abs(l - std::log(2.0)) <= kLossTolerance,
            "L*_m hand case |diff| " + Num(std::abs(l - std::log(2.0))));
  }
  std::mt19937_64 rng(404);
  std::uniform_real_distribution<double> u(0.02, 0.98);
  double multi_err = 0.0;
  bool alpha_exact = true;
  for (int trial = 0; trial < 50; ++trial) {
    const int steps = 2 + trial % 5;
    const int B = 1 + trial % 3;
    std::vector<Example> exs;
    for (int b = 0; b < B; ++b) {
      Example ex = Bare(steps - b % 2);
      ex.ihm_step = ex.length - 1;
      ex.ihm = static_cast<int>(rng() % 2);
      ex.pheno_step = ex.length - 1;
      for (int k = 0; k < kNumPhenotypes; ++k) ex.pheno.push_back(static_cast<int>(rng() % 2));
      for (int t = 0; t < ex.length; ++t) {
        if (rng() % 3) ex.decomp[t] = static_cast<std::int8_t>(rng() % 2);
        if (rng() % 3) {
          ex.los_bucket[t] = static_cast<int>(rng() % kNumLosBuckets);
          ex.los_hours[t] = 24.0 * ex.los_bucket[t];
        }
      }
      exs.push_back(ex);
    }
    std::vector<const Example*> ptrs;
    for (const auto& ex : exs) ptrs.push_back(&ex);
    const auto rows = static_cast<Eigen::Index>(steps * B);
    const auto rand = [&](Eigen::Index c) {
      Matrix m(rows, c);
      for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
      return m;
    };
    Matrix los = rand(kNumLosBuckets);
    for (Eigen::Index r = 0; r < rows; ++r) los.row(r) /= los.row(r).sum();
    Tape tape;
    ModelOutputs out;
    out.ihm = tape.Constant(rand(1));
    out.decomp = tape.Constant(rand(1));
    out.los = tape.Constant(los);
    out.pheno = tape.Constant(rand(kNumPhenotypes));
    LossSpec multi;
    multi.multitask = true;
    multi.lambda = {u(rng) * 4, u(rng) * 4, u(rng) * 4, u(rng) * 4};
    const double total = ComputeLoss(tape, out, ptrs, steps, multi).total.value()(0, 0);
    double expected = 0.0;
    const std::pair<Task, double> parts[] = {{Task::kDecomp, multi.lambda.decomp},
                                             {Task::kIhm, multi.lambda.ihm},
                                             {Task::kLos, multi.lambda.los},
                                             {Task::kPheno, multi.lambda.pheno}};
    for (const auto& [task, lambda] : parts) {
      LossSpec single;
      single.task = task;
      expected += lambda * ComputeLoss(tape, out, ptrs, steps, single).total.value()(0, 0);
    }
    multi_err = std::max(multi_err, std::abs(total - expected));

    LossSpec plain;
    LossSpec zero = plain;
    zero.deep_supervision = true;
    zero.alpha = 0.0;
    alpha_exact = alpha_exact && ComputeLoss(tape, out, ptrs, steps, plain).total.value()(0, 0) ==
                                     ComputeLoss(tape, out, ptrs, steps, zero).total.value()(0, 0);
  }
  v.Check(multi_err <= kLossTolerance, "multitask sum |diff| " + Num(multi_err));
  v.Check(alpha_exact, std::string("alpha=0 equals L_m exactly: ") + (alpha_exact ? "yes" : "no"));
  return v;
}

// ------------------------------------------------ 5. pipeline correctness

struct RawStay {
  Timestamp intime = 0;
  std::optional<double> los_hours;
  std::optional<double> death_hours;
};

std::map<std::int64_t, RawStay> ReadRawStays(const fs::path& dir) {
  std::map<std::int64_t, std::optional<Timestamp>> deaths;
  CsvReader adm(dir / "ADMISSIONS.csv");
  std::vector<std::string> row;
  const int adm_id = adm.ColumnIndex("HADM_ID"), death = adm.ColumnIndex("DEATHTIME");
  while (adm.Next(row)) {
    deaths[std::stoll(row[adm_id])] =
        row[death].empty() ? std::nullopt : ParseTimestamp(row[death]);
  }
  std::map<std::int64_t, RawStay> stays;
  CsvReader icu(dir / "ICUSTAYS.csv");
  const int h = icu.ColumnIndex("HADM_ID"), s = icu.ColumnIndex("ICUSTAY_ID"),
            in = icu.ColumnIndex("INTIME"), los = icu.ColumnIndex("LOS");
  while (icu.Next(row)) {
    RawStay r;
    r.intime = *ParseTimestamp(row[in]);
    if (!row[los].empty()) r.los_hours = std::stod(row[los]) * 24.0;
    if (const auto& d = deaths[std::stoll(row[h])]) {
      r.death_hours = static_cast<double>(*d - r.intime) / 3600.0;
    }
    stays[std::stoll(row[s])] = r;
  }
  return stays;
}

Verdict PipelineCorrectness() {
  TempDir dir;
  SynthConfig config;
  config.seed = 7;
  config.n_patients = 200;
  const auto truth = Generate(config, Vars(), DefaultPhenotypes(), dir.path());
  SubjectStore store = ExtractSubjects(dir.path());
  ValidateEvents(store);
  const auto episodes = ExtractEpisodes(store, Vars());
  const auto& r = store.report;
  Verdict v;
  const std::pair<std::string, std::pair<std::int64_t, std::int64_t>> counts[] = {
      {"multi-stay admissions", {r.Find("admissions")->Dropped("multiple_icu_stays"), truth.multi_stay_admissions}},
      {"multi-stay stays", {r.Find("stays")->Dropped("multi_stay_admission"), truth.multi_stay_stays}},
      {"underage stays", {r.Find("stays")->Dropped("underage"), truth.underage_stays}},
      {"eligible stays", {r.Find("stays")->kept, truth.eligible_stays}},
      {"excluded-stay events", {r.Find("events.extract_subjects")->Dropped("excluded_stay"), truth.excluded_stay_events}},
      {"orphan events", {r.Find("events.validate")->Dropped("orphan_admission"), truth.orphan_events}},
      {"out-of-window events", {r.Find("events.validate")->Dropped("out_of_window"), truth.out_of_window_events}},
      {"recovered stay ids", {r.Find("events.validate")->notes.at("recovered_stay_id"), truth.recoverable_missing_stay_events}},
      {"outliers", {r.Find("events.extract_episodes")->Dropped("outlier"), truth.outlier_events}},
      {"unknown categories", {r.Find("events.extract_episodes")->Dropped("unknown_category"), truth.unknown_category_events}},
      {"unlisted items", {r.Find("events.extract_episodes")->Dropped("unlisted_item"), truth.unlisted_item_events}},
      {"episodes", {static_cast<std::int64_t>(episodes.size()), truth.eligible_stays}},
  };
  std::int64_t mismatched = 0;
  std::string first_mismatch;
  for (const auto& [name, pair] : counts) {
    if (pair.first != pair.second) {
      ++mismatched;
      if (first_mismatch.empty()) first_mismatch = name;
    }
  }
  v.Check(mismatched == 0, "exclusion counts matching ground truth " +
                               std::to_string(std::size(counts) - mismatched) + "/" +
                               std::to_string(std::size(counts)) +
                               (first_mismatch.empty() ? "" : " first mismatch " + first_mismatch));

  const auto raw = ReadRawStays(dir.path());
  const auto manifest = SplitTrainTest(PatientIds(episodes), 0.15, 3);
  const auto decomp = BuildDecomp(episodes, manifest);
  const auto los = BuildLos(episodes, manifest);
  std::map<std::pair<std::int64_t, int>, std::pair<int, double>> expected;
  for (const auto& ep : episodes) {
    const RawStay& s = raw.at(ep.stay_id);
    if (!s.los_hours) continue;
    const double end = s.death_hours ? std::min(*s.los_hours, *s.death_hours) : *s.los_hours;
    for (int tau = 4; tau <= end; ++tau) {
      const int d = s.death_hours && *s.death_hours >= tau && *s.death_hours - tau <= 24.0;
      expected[{ep.stay_id, tau}] = {d, std::max(0.0, *s.los_hours - tau)};
    }
  }
  std::int64_t decomp_bad = 0, los_bad = 0, seen_d = 0, seen_l = 0;
  for (const auto* split : {&decomp.train, &decomp.test}) {
    for (const auto& inst : *split) {
      ++seen_d;
      const auto it = expected.find({inst.stay_id, static_cast<int>(inst.window_end_hours)});
      decomp_bad += it == expected.end() || it->second.first != inst.label;
    }
  }
  for (const auto* split : {&los.train, &los.test}) {
    for (const auto& inst : *split) {
      ++seen_l;
      const auto it = expected.find({inst.stay_id, static_cast<int>(inst.window_end_hours)});
      if (it == expected.end()) {
        ++los_bad;
        continue;
      }
      const double days = it->second.second / 24.0;
      const int bucket = days >= 14 ? 9 : days >= 8 ? 8 : static_cast<int>(days);
      los_bad += it->second.second != inst.los_hours || bucket != inst.los_bucket;
    }
  }
  decomp_bad += std::abs(seen_d - static_cast<std::int64_t>(expected.size()));
  los_bad += std::abs(seen_l - static_cast<std::int64_t>(expected.size()));
  v.Check(decomp_bad == 0, "decomp label mismatches " + std::to_string(decomp_bad) + " of " +
                               std::to_string(expected.size()));
  v.Check(los_bad == 0, "LOS label mismatches " + std::to_string(los_bad));

  std::int64_t leaked = 0;
  for (const auto& split : {BuildIhm(episodes, manifest), decomp, los,
                            BuildPheno(episodes, manifest, DefaultPhenotypes())}) {
    std::set<std::int64_t> train;
    for (const auto& i : split.train) train.insert(i.patient_id);
    for (const auto& i : split.test) leaked += train.contains(i.patient_id);
  }
  v.Check(leaked == 0, "leaked test stays " + std::to_string(leaked));
  return v;
}

// ------------------------------------------------------- 6. learnability

struct Cohort {
  TempDir dir;
  EpisodeStore store;
  std::vector<TaskInstance> ihm;  // training split
};

std::unique_ptr<Cohort> MakeCohort(int patients, double strength, SignalKind kind,
                                   double mortality, double event_scale, std::uint64_t seed) {
  auto c = std::make_unique<Cohort>();
  SynthConfig config;
  config.seed = seed;
  config.n_patients = patients;
  config.signal_kind = kind;
  config.mortality_rate = mortality;
  config.event_rate_scale = event_scale;
  PlantSignal(config, strength, Vars(), DefaultPhenotypes(), c->dir.path());
  Benchmark bench = BuildBenchmark(c->dir.path(), Vars(), DefaultPhenotypes(), {});
  c->ihm = bench.ihm.train;
  c->store = EpisodeStore(std::move(bench.episodes), bench.manifest);
  return c;
}

struct Scores {
  double lr_train = NAN, lr_val = NAN, lstm_train = NAN, lstm_val = NAN;
  double seconds = 0;
};

double LstmAuc(const TrainResult& result, const Cohort& c,
               const std::vector<TaskInstance>& instances) {
  SequenceModel model = result.BestModel(Task::kIhm, Vars());
  SequencePool pool;
  ExampleBuilder builder(pool);
  builder.Reserve(instances);
  const auto examples = builder.Ungrouped(instances, Task::kIhm);
  pool.Build(c.store, Vars(), 1);
  pool.Standardize(result.standardizer);
  const auto p = Predict(model, pool, examples, 64);
  return AucRoc(p.ihm_score, p.ihm_label);
}

Scores LearnIhm(const Cohort& c, int epochs, int hidden, std::uint64_t seed) {
  const auto start = std::chrono::steady_clock::now();
  Scores s;
  TrainConfig config;
  config.model.hidden = hidden;
  config.model.seed = seed;
  config.model.task = Task::kIhm;
  config.epochs = epochs;
  config.batch_size = 32;
  config.adam.lr = 5e-3;
  config.seed = seed;
  const TrainData data{&c.store, &Vars(), {{Task::kIhm, c.ihm}}};
  const TrainResult result = TrainModel(data, config);

  std::vector<TaskInstance> train, val;
  for (const auto& inst : c.ihm) {
    (result.validation_split.IsTest(inst.patient_id) ? val : train).push_back(inst);
  }
  const Matrix x_train = FeatureMatrix(train, c.store, Vars());
  const Matrix x_val = FeatureMatrix(val, c.store, Vars());
  LinearTrainConfig lin;
  lin.seed = seed;
  const LinearModel lr = FitLinear(x_train, LinearTargets(train, Task::kIhm),
                                   LinearKind::kLogistic, lin);
  const auto auc = [](const Matrix& p, const std::vector<TaskInstance>& inst) {
    std::vector<double> scores(p.col(0).data(), p.col(0).data() + p.rows());
    std::vector<int> labels;
    for (const auto& i : inst) labels.push_back(i.label);
    return AucRoc(scores, labels);
  };
  s.lr_train = auc(PredictLinear(lr, x_train), train);
  s.lr_val = auc(PredictLinear(lr, x_val), val);
  s.lstm_train = LstmAuc(result, c, train);
  s.lstm_val = LstmAuc(result, c, val);
  s.seconds = Seconds(start);
  return s;
}

Verdict Learnability() {
  Verdict v;
  {
    const auto start = std::chrono::steady_clock::now();
    const auto c = MakeCohort(600, 1.0, SignalKind::kLinear, 0.3, 0.5, 61);
    const Scores s = LearnIhm(*c, 10, 16, 61);
    const double t = Seconds(start);
    v.Check(s.lr_train > kTrainAucFloor, "planted LR train AUC " + Num(s.lr_train));
    v.Check(s.lstm_train > kTrainAucFloor, "planted LSTM train AUC " + Num(s.lstm_train));
    v.Check(t < kLearnBudgetSeconds, "planted run " + Num(t) + " s");
  }
  {
    const auto start = std::chrono::steady_clock::now();
    const auto c = MakeCohort(1500, 1.0, SignalKind::kXor, 0.5, 0.5, 62);
    const Scores s = LearnIhm(*c, 15, 16, 62);
    const double t = Seconds(start);
    v.Check(s.lstm_val - s.lr_val >= kNonlinearMargin,
            "XOR val AUC LSTM " + Num(s.lstm_val) + " - LR " + Num(s.lr_val) + " = " +
                Num(s.lstm_val - s.lr_val));
    v.Check(t < kLearnBudgetSeconds, "XOR run " + Num(t) + " s");
  }
  {
    const auto start = std::chrono::steady_clock::now();
    const auto c = MakeCohort(4000, 0.0, SignalKind::kLinear, 0.5, 0.25, 63);
    const Scores s = LearnIhm(*c, 3, 16, 63);
    const double t = Seconds(start);
    const auto in_band = [](double x) { return x >= kNullAucLow && x <= kNullAucHigh; };
    v.Check(in_band(s.lr_val), "null LR val AUC " + Num(s.lr_val));
    v.Check(in_band(s.lstm_val), "null LSTM val AUC " + Num(s.lstm_val));
    v.Check(t < kLearnBudgetSeconds, "null run " + Num(t) + " s");
  }
  return v;
}

// --------------------------------------------------------- 7. determinism

std::map<std::string, std::string> Snapshot(const fs::path& dir) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (e.is_regular_file()) files[fs::relative(e.path(), dir).string()] = testing::ReadFile(e.path());
  }
  return files;
}

Verdict Determinism() {
  TempDir dir;
  const std::string root = (dir.path() / "w").string();
  const std::vector<std::vector<std::string>> commands = {
      {"synth", "--root", root, "--seed", "11", "--patients", "80", "--signal-strength", "1", "--jobs", "1"},
      {"build", "--root", root, "--jobs", "1"},
      {"features", "--root", root, "--task", "ihm", "--jobs", "1"},
      {"train", "linear", "--root", root, "--task", "ihm", "--C", "0.1,1", "--jobs", "1"},
      {"train", "lstm", "--root", root, "--task", "decomp", "--deep-supervision", "--epochs", "2",
       "--hidden", "6", "--dropout", "0.2", "--jobs", "1"},
      {"train", "channelwise", "--root", root, "--multitask", "--epochs", "1", "--hidden", "6",
       "--channel-units", "2", "--jobs", "1"},
      {"evaluate", "--root", root, "--model", root + "/runs/channelwise-multitask", "--jobs", "1"},
      {"report", "--root", root, "--eval", root + "/runs/channelwise-multitask/eval-val",
       "--bootstrap", "50", "--data", root + "/benchmark", "--jobs", "1"},
  };
  std::vector<std::map<std::string, std::string>> snapshots;
  Verdict v;
  for (int rep = 0; rep < 2; ++rep) {
    fs::remove_all(root);
    for (const auto& cmd : commands) {
      std::ostringstream out, err;
      const int code = cli::RunCli(cmd, out, err);
      if (code != 0) {
        v.Check(false, cmd[0] + " exited " + std::to_string(code) + ": " + err.str());
        return v;
      }
    }
    snapshots.push_back(Snapshot(root));
  }
  std::int64_t differing = 0, checkpoints = 0;
  for (const auto& [name, bytes] : snapshots[0]) {
    const auto it = snapshots[1].find(name);
    differing += it == snapshots[1].end() || it->second != bytes;
    checkpoints += name.ends_with(".ckpt");
  }
  differing += std::abs(static_cast<std::int64_t>(snapshots[1].size()) -
                        static_cast<std::int64_t>(snapshots[0].size()));
  v.Check(differing == 0, "differing files " + std::to_string(differing) + " of " +
                              std::to_string(snapshots[0].size()) + " (" +
                              std::to_string(checkpoints) + " checkpoints)");
  return v;
}

// ---------------------------------------------------------- 8. calibration

Verdict CalibrationProperty() {
  std::mt19937_64 rng(808);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> scores(10000);
  std::vector<int> labels(10000);
  for (size_t i = 0; i < scores.size(); ++i) {
    scores[i] = u(rng);
    labels[i] = u(rng) < scores[i];
  }
  const auto curve = Calibration(scores, labels, 10);
  double gap = 0;
  for (const auto& b : curve.bins) gap = std::max(gap, std::abs(b.mean_predicted - b.observed_rate));
  Verdict v;
  v.Check(curve.bins.size() == 10, "bins " + std::to_string(curve.bins.size()));
  v.Check(gap < kCalibrationGap, "max |mean - rate| " + Num(gap));
  return v;
}

}  // namespace
}  // namespace icubench

int main(int argc, char** argv) {
  using icubench::Verdict;
  const std::vector<std::pair<const char*, Verdict (*)()>> criteria = {
      {"gradient fidelity", icubench::GradientFidelity},
      {"metric oracles", icubench::MetricOracles},
      {"shape accounting", icubench::ShapeAccounting},
      {"loss formula pinning", icubench::LossPinning},
      {"pipeline correctness", icubench::PipelineCorrectness},
      {"learnability", icubench::Learnability},
      {"determinism", icubench::Determinism},
      {"calibration", icubench::CalibrationProperty},
  };
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));
  bool all = true;
  for (size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!only.empty() && !only.contains(id)) continue;
    Verdict v;
    try {
      v = criteria[i].second();
    } catch (const std::exception& e) {
      v.Check(false, std::string("exception: ") + e.what());
    }
    all = all && v.pass;
    std::cout << "criterion " << id << " (" << criteria[i].first
              << "): " << (v.pass ? "PASS" : "FAIL") << " -- " << v.detail << std::endl;
  }
  return all ? 0 : 1;
}
