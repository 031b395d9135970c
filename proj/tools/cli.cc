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

#include "cli.h"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <set>

#include <CLI11.hpp>

#include "icubench/checkpoint.h"
#include "icubench/core.h"
#include "icubench/csv.h"
#include "icubench/dataset.h"
#include "icubench/discretizer.h"
#include "icubench/featlin.h"
#include "icubench/metrics.h"
#include "icubench/phenotypes.h"
#include "icubench/pipeline.h"
#include "icubench/rnn.h"
#include "icubench/syngen.h"
#include "icubench/train.h"
#include "manifest.h"

namespace icubench::cli {
namespace {

namespace fs = std::filesystem;

constexpr const char* kDataRootEnv = "ICUBENCH_DATA_ROOT";
constexpr const char* kManifestName = "manifest.json";
constexpr const char* kStandardizerName = "standardizer.txt";
constexpr const char* kValidationSplitName = "validation_split.txt";

// Options shared by every subcommand.
struct Common {
  int jobs = 1;
  std::string root;
  std::string variables;
  std::string phenotypes;
};

struct SynthArgs {
  std::string out;
  std::uint64_t seed = 0;
  int patients = 200;
  double signal_strength = 0.0;
  std::string signal_kind = "linear";
  double mortality_rate = 0.13;
  double event_rate_scale = 1.0;
  bool no_anomalies = false;
};

struct BuildArgs {
  std::string tables;
  std::string out;
  std::uint64_t split_seed = 0;
  double test_fraction = 0.15;
};

struct FeaturesArgs {
  std::string data;
  std::string task = "ihm";
  std::string split = "train";
  std::string out;
};

struct TrainArgs {
  std::string model;
  std::string data;
  std::string task = "ihm";
  std::string out;
  std::uint64_t seed = 0;
  // Recurrent models.
  bool deep_supervision = false;
  bool multitask = false;
  std::optional<double> alpha;
  int layers = 1;
  int hidden = 16;
  int channel_units = 4;
  double dropout = 0.0;
  bool bidirectional = false;
  bool raw_los = false;
  bool gate_bias = false;
  int epochs = 10;
  int batch_size = 0;
  double lr = 1e-3;
  int patience = 0;
  double validation_fraction = 0.15;
  std::int64_t examples_per_epoch = 0;
  std::int64_t validation_cap = 0;
  double step_hours = 1.0;
  std::vector<double> lambda;
  std::vector<int> grid_hidden, grid_layers, grid_channel_units;
  std::vector<double> grid_dropout;
  bool grid_lambdas = false;
  // Linear models.
  std::vector<double> c_values = {1.0};
  std::string regularization = "l2";
  std::int64_t max_instances = kDefaultLinearInstanceCap;
  int max_iterations = 5000;
  double tolerance = 1e-6;
};

struct EvaluateArgs {
  std::string data;
  std::string model;
  std::string split = "val";
  bool final = false;
  std::vector<std::string> tasks;
  std::string out;
  int batch_size = 16;
};

struct ReportArgs {
  std::string eval;
  std::string out;
  std::string data;
  int bootstrap = 1000;
  std::uint64_t seed = 0;
  int bins = 10;
};

struct Context {
  Common common;
  std::vector<std::string> arguments;
  std::ostream* out = nullptr;
};

fs::path DataRoot(const Common& c) {
  if (!c.root.empty()) return c.root;
  if (const char* env = std::getenv(kDataRootEnv); env != nullptr && *env != '\0') return env;
  return ".";
}

fs::path OrDefault(const std::string& flag, const fs::path& fallback) {
  return flag.empty() ? fallback : fs::path(flag);
}

void RequireInput(const fs::path& path) {
  if (!fs::exists(path)) throw IoError("missing input: " + path.string());
}

Error Usage(const std::string& message) { return Error(ErrorCategory::kUsage, message); }

struct Tables {
  VariableTable variables;
  PhenotypeMap phenotypes;
};

Tables LoadTables(const Common& c) {
  if (!c.variables.empty()) RequireInput(c.variables);
  if (!c.phenotypes.empty()) RequireInput(c.phenotypes);
  return {c.variables.empty() ? DefaultVariables() : VariableTable(LoadVariableConfig(c.variables)),
          c.phenotypes.empty() ? DefaultPhenotypes() : LoadPhenotypeConfig(c.phenotypes)};
}

RunManifest NewManifest(const Context& ctx, const std::string& subcommand) {
  RunManifest m;
  m.subcommand = subcommand;
  m.arguments = ctx.arguments;
  m.config["jobs"] = std::to_string(ctx.common.jobs);
  m.config["variables"] = ctx.common.variables.empty() ? "builtin" : ctx.common.variables;
  m.config["phenotypes"] = ctx.common.phenotypes.empty() ? "builtin" : ctx.common.phenotypes;
  if (!ctx.common.variables.empty()) {
    m.inputs[ctx.common.variables] = HashFile(ctx.common.variables);
  } else {
    m.inputs["builtin:variables"] = GitBlobHash(DefaultVariableConfigText());
  }
  if (!ctx.common.phenotypes.empty()) m.inputs[ctx.common.phenotypes] = HashFile(ctx.common.phenotypes);
  return m;
}

// Hashes every file in `dir` (except the manifest) into the output table.
void RecordOutputs(RunManifest& m, const fs::path& dir) {
  std::vector<fs::path> files;
  for (const auto& entry : fs::recursive_directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().filename() != kManifestName) {
      files.push_back(entry.path());
    }
  }
  std::sort(files.begin(), files.end());
  for (const auto& f : files) m.outputs[fs::relative(f, dir).generic_string()] = HashFile(f);
}

void WriteText(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw IoError("cannot write " + path.string());
}

std::string ReadText(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::string Fmt(double v) { return std::isfinite(v) ? FormatDouble(v) : "nan"; }

// ---------------------------------------------------------------- synth

int RunSynth(const Context& ctx, const SynthArgs& a) {
  const Tables t = LoadTables(ctx.common);
  SynthConfig config;
  config.seed = a.seed;
  config.n_patients = a.patients;
  config.signal_strength = a.signal_strength;
  config.signal_kind = a.signal_kind == "xor" ? SignalKind::kXor : SignalKind::kLinear;
  config.mortality_rate = a.mortality_rate;
  config.event_rate_scale = a.event_rate_scale;
  if (a.no_anomalies) {
    config.multi_stay_rate = config.underage_rate = config.elderly_shift_rate = 0.0;
    config.missing_los_rate = config.orphan_event_rate = config.out_of_window_rate = 0.0;
    config.missing_stay_id_rate = config.outlier_rate = config.unknown_category_rate = 0.0;
    config.unlisted_item_rate = 0.0;
  }
  config.Validate(t.variables);
  const fs::path out = OrDefault(a.out, DataRoot(ctx.common) / "tables");
  fs::create_directories(out);
  const auto report = Generate(config, t.variables, t.phenotypes, out, ctx.common.jobs);

  RunManifest m = NewManifest(ctx, "synth");
  m.config["out"] = out.generic_string();
  m.config["patients"] = std::to_string(a.patients);
  m.config["signal_strength"] = Fmt(a.signal_strength);
  m.config["signal_kind"] = a.signal_kind;
  m.config["mortality_rate"] = Fmt(a.mortality_rate);
  m.config["event_rate_scale"] = Fmt(a.event_rate_scale);
  m.config["anomalies"] = a.no_anomalies ? "off" : "on";
  m.seeds["generator"] = std::to_string(a.seed);
  RecordOutputs(m, out);
  m.Write(out / kManifestName);
  *ctx.out << "synth: wrote " << report.patients << " patients, " << report.stays
           << " stays, " << report.events << " events to " << out.string() << "\n";
  return 0;
}

// ---------------------------------------------------------------- build

int RunBuild(const Context& ctx, const BuildArgs& a) {
  const fs::path root = DataRoot(ctx.common);
  const fs::path tables = OrDefault(a.tables, root / "tables");
  const fs::path out = OrDefault(a.out, root / "benchmark");
  RequireInput(tables);
  const Tables t = LoadTables(ctx.common);
  BuildOptions options;
  options.split_seed = a.split_seed;
  options.test_fraction = a.test_fraction;
  const Benchmark bench = BuildBenchmark(tables, t.variables, t.phenotypes, options);
  fs::create_directories(out);
  WriteBenchmark(bench, out, t.variables);

  RunManifest m = NewManifest(ctx, "build");
  m.config["tables"] = tables.generic_string();
  m.config["out"] = out.generic_string();
  m.config["test_fraction"] = Fmt(a.test_fraction);
  m.seeds["split"] = std::to_string(a.split_seed);
  m.inputs[tables.generic_string()] = HashDirectory(tables, kManifestName);
  RecordOutputs(m, out);
  m.Write(out / kManifestName);
  *ctx.out << "build: " << bench.episodes.size() << " episodes; instances train/test ihm "
           << bench.ihm.train.size() << "/" << bench.ihm.test.size() << ", decomp "
           << bench.decomp.train.size() << "/" << bench.decomp.test.size() << ", los "
           << bench.los.train.size() << "/" << bench.los.test.size() << ", pheno "
           << bench.pheno.train.size() << "/" << bench.pheno.test.size() << "\n";
  return 0;
}

// ------------------------------------------------------------- features

int RunFeatures(const Context& ctx, const FeaturesArgs& a) {
  const Task task = ParseTask(a.task);
  const fs::path data = OrDefault(a.data, DataRoot(ctx.common) / "benchmark");
  const fs::path out =
      OrDefault(a.out, data / "features" / (a.task + "_" + a.split + ".csv"));
  RequireInput(data);
  const Tables t = LoadTables(ctx.common);
  const EpisodeStore store = LoadEpisodes(data, t.variables);
  const TaskSplit split = LoadTask(data, task, store);
  const auto& instances = a.split == "train" ? split.train : split.test;
  const nd::Matrix x = FeatureMatrix(instances, store, t.variables, ctx.common.jobs);
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  WriteFeatureCsv(x, instances, t.variables, out);

  RunManifest m = NewManifest(ctx, "features");
  m.config["data"] = data.generic_string();
  m.config["task"] = a.task;
  m.config["split"] = a.split;
  m.inputs[data.generic_string()] = HashDirectory(data, kManifestName);
  m.outputs[out.filename().string()] = HashFile(out);
  m.Write(fs::path(out.string() + ".manifest.json"));
  *ctx.out << "features: " << x.rows() << " x " << x.cols() << " -> " << out.string() << "\n";
  return 0;
}

// ------------------------------------------------------ predictions I/O

std::string ModelFile(Task task) { return std::string("model_") + TaskName(task) + ".ckpt"; }
std::string PredictionFile(Task task) {
  return std::string("predictions_") + TaskName(task) + ".csv";
}

void WritePredictions(Task task, const Predictions& p, const fs::path& path) {
  CsvWriter w(path);
  switch (task) {
    case Task::kIhm:
      w.WriteRow({"stay", "score", "label"});
      for (size_t i = 0; i < p.ihm_stay.size(); ++i) {
        w.WriteRow({std::to_string(p.ihm_stay[i]), Fmt(p.ihm_score[i]),
                    std::to_string(p.ihm_label[i])});
      }
      break;
    case Task::kDecomp:
      w.WriteRow({"stay", "hour", "score", "label"});
      for (size_t i = 0; i < p.decomp_stay.size(); ++i) {
        w.WriteRow({std::to_string(p.decomp_stay[i]), Fmt(p.decomp_hour[i]),
                    Fmt(p.decomp_score[i]), std::to_string(p.decomp_label[i])});
      }
      break;
    case Task::kLos: {
      const bool probs = !p.los_probs.empty();
      std::vector<std::string> header = {"stay", "hour", "remaining_hours", "bucket",
                                         "pred_bucket", "pred_hours"};
      if (probs) {
        for (int k = 0; k < kNumLosBuckets; ++k) header.push_back("p" + std::to_string(k));
      }
      w.WriteRow(header);
      for (size_t i = 0; i < p.los_stay.size(); ++i) {
        std::vector<std::string> row = {
            std::to_string(p.los_stay[i]), Fmt(p.los_hour[i]), Fmt(p.los_hours[i]),
            std::to_string(p.los_bucket[i]), std::to_string(p.los_pred_bucket[i]),
            p.los_pred_hours.empty() ? "" : Fmt(p.los_pred_hours[i])};
        if (probs) {
          for (double v : p.los_probs[i]) row.push_back(Fmt(v));
        }
        w.WriteRow(row);
      }
      break;
    }
    case Task::kPheno: {
      std::vector<std::string> header = {"stay"};
      for (int k = 0; k < kNumPhenotypes; ++k) header.push_back("score_" + std::to_string(k));
      for (int k = 0; k < kNumPhenotypes; ++k) header.push_back("label_" + std::to_string(k));
      w.WriteRow(header);
      for (size_t i = 0; i < p.pheno_stay.size(); ++i) {
        std::vector<std::string> row = {std::to_string(p.pheno_stay[i])};
        for (int k = 0; k < kNumPhenotypes; ++k) row.push_back(Fmt(p.pheno_scores[i * kNumPhenotypes + k]));
        for (int k = 0; k < kNumPhenotypes; ++k) row.push_back(std::to_string(p.pheno_labels[i * kNumPhenotypes + k]));
        w.WriteRow(row);
      }
      break;
    }
  }
  w.Close();
}

double ParseField(const CsvReader& r, const std::string& field) {
  double v = 0.0;
  const char* end = field.data() + field.size();
  const auto [ptr, ec] = std::from_chars(field.data(), end, v);
  if (field == "nan") return std::numeric_limits<double>::quiet_NaN();
  if (field.empty() || ec != std::errc() || ptr != end) {
    throw SchemaError(r.source() + ":" + std::to_string(r.record_number()) +
                      ": not a number: '" + field + "'");
  }
  return v;
}

Predictions ReadPredictions(Task task, const fs::path& path) {
  CsvReader r(path);
  Predictions p;
  std::vector<std::string> row;
  const auto num = [&](const char* col) { return ParseField(r, row[r.ColumnIndex(col)]); };
  const auto id = [&](const char* col) { return static_cast<std::int64_t>(num(col)); };
  const auto label = [&](const char* col) { return static_cast<int>(num(col)); };
  const bool probs = task == Task::kLos && r.HasColumn("p0");
  while (r.Next(row)) {
    switch (task) {
      case Task::kIhm:
        p.ihm_stay.push_back(id("stay"));
        p.ihm_score.push_back(num("score"));
        p.ihm_label.push_back(label("label"));
        break;
      case Task::kDecomp:
        p.decomp_stay.push_back(id("stay"));
        p.decomp_hour.push_back(num("hour"));
        p.decomp_score.push_back(num("score"));
        p.decomp_label.push_back(label("label"));
        break;
      case Task::kLos: {
        p.los_stay.push_back(id("stay"));
        p.los_hour.push_back(num("hour"));
        p.los_hours.push_back(num("remaining_hours"));
        p.los_bucket.push_back(label("bucket"));
        p.los_pred_bucket.push_back(label("pred_bucket"));
        if (!row[r.ColumnIndex("pred_hours")].empty()) p.los_pred_hours.push_back(num("pred_hours"));
        if (probs) {
          std::array<double, kNumLosBuckets> pr{};
          for (int k = 0; k < kNumLosBuckets; ++k) {
            pr[k] = num(("p" + std::to_string(k)).c_str());
          }
          p.los_probs.push_back(pr);
        }
        break;
      }
      case Task::kPheno:
        p.pheno_stay.push_back(id("stay"));
        for (int k = 0; k < kNumPhenotypes; ++k) {
          p.pheno_scores.push_back(num(("score_" + std::to_string(k)).c_str()));
        }
        for (int k = 0; k < kNumPhenotypes; ++k) {
          p.pheno_labels.push_back(label(("label_" + std::to_string(k)).c_str()));
        }
        break;
    }
  }
  if (!p.los_pred_hours.empty() && p.los_pred_hours.size() != p.los_stay.size()) {
    throw SchemaError(path.string() + ": pred_hours must be filled on every row or none");
  }
  return p;
}

// Metric name -> value over (a subset of) the prediction rows. Undefined
// metrics throw UndefinedMetricError.
using MetricFn = std::function<double(const Predictions&, std::span<const size_t>)>;

template <typename T>
std::vector<T> Pick(const std::vector<T>& v, std::span<const size_t> rows, size_t width = 1) {
  std::vector<T> out;
  out.reserve(rows.size() * width);
  for (size_t r : rows) out.insert(out.end(), v.begin() + r * width, v.begin() + (r + 1) * width);
  return out;
}

std::vector<std::pair<std::string, MetricFn>> TaskMetrics(Task task, const Predictions& p) {
  std::vector<std::pair<std::string, MetricFn>> m;
  switch (task) {
    case Task::kIhm:
      m.emplace_back("auc_roc", [](const Predictions& q, std::span<const size_t> r) {
        return AucRoc(Pick(q.ihm_score, r), Pick(q.ihm_label, r));
      });
      m.emplace_back("auc_pr", [](const Predictions& q, std::span<const size_t> r) {
        return AucPr(Pick(q.ihm_score, r), Pick(q.ihm_label, r));
      });
      break;
    case Task::kDecomp:
      m.emplace_back("auc_roc", [](const Predictions& q, std::span<const size_t> r) {
        return AucRoc(Pick(q.decomp_score, r), Pick(q.decomp_label, r));
      });
      m.emplace_back("auc_pr", [](const Predictions& q, std::span<const size_t> r) {
        return AucPr(Pick(q.decomp_score, r), Pick(q.decomp_label, r));
      });
      break;
    case Task::kLos:
      m.emplace_back("kappa", [](const Predictions& q, std::span<const size_t> r) {
        if (r.empty()) throw UndefinedMetricError("no LOS predictions");
        return LinearKappa(Pick(q.los_pred_bucket, r), Pick(q.los_bucket, r));
      });
      if (!p.los_pred_hours.empty()) {
        m.emplace_back("mad_hours", [](const Predictions& q, std::span<const size_t> r) {
          return Mad(Pick(q.los_pred_hours, r), Pick(q.los_hours, r));
        });
      }
      break;
    case Task::kPheno:
      m.emplace_back("macro_auc_roc", [](const Predictions& q, std::span<const size_t> r) {
        const auto res = MultilabelAuc(Pick(q.pheno_scores, r, kNumPhenotypes),
                                       Pick(q.pheno_labels, r, kNumPhenotypes), kNumPhenotypes);
        if (res.excluded_labels.size() == static_cast<size_t>(kNumPhenotypes)) {
          throw UndefinedMetricError("every phenotype label has a single class");
        }
        return res.macro;
      });
      m.emplace_back("micro_auc_roc", [](const Predictions& q, std::span<const size_t> r) {
        return MultilabelAuc(Pick(q.pheno_scores, r, kNumPhenotypes),
                             Pick(q.pheno_labels, r, kNumPhenotypes), kNumPhenotypes)
            .micro;
      });
      break;
  }
  return m;
}

size_t Rows(Task task, const Predictions& p) {
  switch (task) {
    case Task::kIhm: return p.ihm_stay.size();
    case Task::kDecomp: return p.decomp_stay.size();
    case Task::kLos: return p.los_stay.size();
    case Task::kPheno: return p.pheno_stay.size();
  }
  return 0;
}

std::vector<size_t> AllRows(size_t n) {
  std::vector<size_t> rows(n);
  std::iota(rows.begin(), rows.end(), size_t{0});
  return rows;
}

std::optional<ExtendedLosResult> ExtendedLos(const Predictions& p) {
  if (p.los_probs.empty()) return std::nullopt;
  std::vector<LosPrediction> preds;
  for (size_t i = 0; i < p.los_stay.size(); ++i) {
    preds.push_back({p.los_stay[i], p.los_hour[i], p.los_probs[i], p.los_hour[i] + p.los_hours[i]});
  }
  try {
    return ExtendedLosAuc(preds);
  } catch (const UndefinedMetricError&) {
    return std::nullopt;
  }
}

std::string FormatMetrics(Task task, const Predictions& p) {
  const std::string prefix = std::string(TaskName(task)) + ".";
  const auto rows = AllRows(Rows(task, p));
  std::string text = prefix + "instances: " + std::to_string(rows.size()) + "\n";
  for (const auto& [name, fn] : TaskMetrics(task, p)) {
    std::string value;
    try {
      value = Fmt(fn(p, rows));
    } catch (const UndefinedMetricError&) {
      value = "undefined";
    }
    text += prefix + name + ": " + value + "\n";
  }
  if (task == Task::kPheno && !rows.empty()) {
    const auto res = MultilabelAuc(p.pheno_scores, p.pheno_labels, kNumPhenotypes);
    for (int k = 0; k < kNumPhenotypes; ++k) {
      text += prefix + "auc_roc_label_" + std::to_string(k) + ": " +
              (res.per_label[k] ? Fmt(*res.per_label[k]) : std::string("undefined")) + "\n";
    }
  }
  if (task == Task::kLos) {
    if (const auto ext = ExtendedLos(p)) {
      text += prefix + "extended_los_auc_roc: " + Fmt(ext->auc_roc) + "\n";
      text += prefix + "extended_los_skipped_stays: " + std::to_string(ext->skipped_stays) + "\n";
    }
  }
  return text;
}

// ---------------------------------------------------------------- train

std::vector<TaskInstance> Subset(const std::vector<TaskInstance>& v,
                                 const std::vector<size_t>& keep) {
  std::vector<TaskInstance> out;
  out.reserve(keep.size());
  for (size_t i : keep) out.push_back(v[i]);
  return out;
}

// Instance order sorted by (stay, window end).
std::vector<size_t> StayOrder(std::span<const TaskInstance> instances) {
  auto order = AllRows(instances.size());
  std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    const auto& x = instances[a];
    const auto& y = instances[b];
    return x.stay_id != y.stay_id ? x.stay_id < y.stay_id
                                  : x.window_end_hours < y.window_end_hours;
  });
  return order;
}

Predictions LinearPredictions(const LinearModel& model, Task task,
                              std::span<const TaskInstance> instances, const nd::Matrix& x) {
  const nd::Matrix probs = PredictLinear(model, x);
  Predictions p;
  for (size_t i : StayOrder(instances)) {
    const auto& inst = instances[i];
    const auto r = static_cast<Eigen::Index>(i);
    switch (task) {
      case Task::kIhm:
        p.ihm_stay.push_back(inst.stay_id);
        p.ihm_score.push_back(probs(r, 0));
        p.ihm_label.push_back(inst.label);
        break;
      case Task::kDecomp:
        p.decomp_stay.push_back(inst.stay_id);
        p.decomp_hour.push_back(inst.window_end_hours);
        p.decomp_score.push_back(probs(r, 0));
        p.decomp_label.push_back(inst.label);
        break;
      case Task::kLos: {
        std::array<double, kNumLosBuckets> pr{};
        for (int k = 0; k < kNumLosBuckets; ++k) pr[k] = probs(r, k);
        p.los_stay.push_back(inst.stay_id);
        p.los_hour.push_back(inst.window_end_hours);
        p.los_probs.push_back(pr);
        p.los_pred_bucket.push_back(
            static_cast<int>(std::max_element(pr.begin(), pr.end()) - pr.begin()));
        p.los_bucket.push_back(inst.los_bucket);
        p.los_hours.push_back(inst.los_hours);
        break;
      }
      case Task::kPheno:
        p.pheno_stay.push_back(inst.stay_id);
        for (int k = 0; k < kNumPhenotypes; ++k) p.pheno_scores.push_back(probs(r, k));
        p.pheno_labels.insert(p.pheno_labels.end(), inst.phenotypes.begin(),
                              inst.phenotypes.end());
        break;
    }
  }
  return p;
}

std::vector<std::int64_t> PatientsOf(std::span<const TaskInstance> instances) {
  std::vector<std::int64_t> ids;
  for (const auto& inst : instances) ids.push_back(inst.patient_id);
  return ids;
}

void TrainLinearModel(const Context& ctx, const TrainArgs& a, Task task, const Tables& t,
                      const EpisodeStore& store, const std::vector<TaskInstance>& train_all,
                      const fs::path& out, RunManifest& m) {
  if (a.c_values.empty()) throw Usage("--C needs at least one value");
  const SplitManifest val_split =
      SplitTrainTest(PatientsOf(train_all), a.validation_fraction, a.seed);
  std::vector<TaskInstance> train, val;
  for (const auto& inst : train_all) {
    (val_split.IsTest(inst.patient_id) ? val : train).push_back(inst);
  }
  if (train.empty()) throw DomainError("no training instances after the validation split");
  train = Subset(train, SubsampleIndices(train.size(), a.max_instances, a.seed));
  const nd::Matrix x_train = FeatureMatrix(train, store, t.variables, ctx.common.jobs);
  const nd::Matrix x_val = FeatureMatrix(val, store, t.variables, ctx.common.jobs);
  const nd::Matrix y = LinearTargets(train, task);

  struct Candidate {
    size_t index;
    double c;
    double score;
    LinearModel model;
  };
  std::vector<Candidate> candidates;
  for (size_t i = 0; i < a.c_values.size(); ++i) {
    LinearTrainConfig config;
    config.reg = ParseRegularization(a.regularization);
    config.C = a.c_values[i];
    config.max_iterations = a.max_iterations;
    config.tolerance = a.tolerance;
    config.seed = a.seed;
    LinearModel model = FitLinear(x_train, y, LinearKindFor(task), config);
    const double score =
        val.empty() ? std::numeric_limits<double>::quiet_NaN()
                    : TaskMetric(task, LinearPredictions(model, task, val, x_val));
    candidates.push_back({i, a.c_values[i], score, std::move(model)});
  }
  const auto key = [](const Candidate& c) {
    return std::isfinite(c.score) ? c.score : -std::numeric_limits<double>::infinity();
  };
  std::stable_sort(candidates.begin(), candidates.end(),
                   [&](const Candidate& x, const Candidate& y) { return key(x) > key(y); });
  std::string ranking = "rank,config,C,regularization,score\n";
  for (size_t r = 0; r < candidates.size(); ++r) {
    ranking += std::to_string(r + 1) + "," + std::to_string(candidates[r].index) + "," +
               Fmt(candidates[r].c) + "," + a.regularization + "," + Fmt(candidates[r].score) + "\n";
  }
  WriteText(out / "ranking.csv", ranking);
  WriteSplit(val_split, out / kValidationSplitName);
  SaveLinearModel(candidates.front().model, out / ModelFile(task));
  m.config["C"] = Fmt(candidates.front().c);
  m.config["regularization"] = a.regularization;
  m.config["max_instances"] = std::to_string(a.max_instances);
  m.config["max_iterations"] = std::to_string(a.max_iterations);
  m.config["tolerance"] = Fmt(a.tolerance);
  *ctx.out << "train: linear " << TaskName(task) << " C=" << Fmt(candidates.front().c)
           << " validation " << Fmt(candidates.front().score) << "\n";
}

void TrainRecurrentModel(const Context& ctx, const TrainArgs& a, Task task, const Tables& t,
                         const EpisodeStore& store,
                         std::map<Task, std::vector<TaskInstance>> instances,
                         const fs::path& out, RunManifest& m) {
  TrainConfig base;
  base.model.arch = a.model == "channelwise" ? Arch::kChannelwise : Arch::kStandard;
  base.model.layers = a.layers;
  base.model.hidden = a.hidden;
  base.model.channel_units = a.channel_units;
  base.model.dropout = a.dropout;
  base.model.bidirectional = a.bidirectional;
  base.model.deep_supervision = a.deep_supervision;
  base.model.multitask = a.multitask;
  base.model.task = task;
  base.model.raw_los = a.raw_los;
  base.model.gate_bias = a.gate_bias;
  base.model.seed = a.seed;
  if (a.alpha) base.loss.alpha = *a.alpha;
  if (!a.lambda.empty()) {
    if (a.lambda.size() != 4) throw Usage("--lambda takes decomp,ihm,los,pheno");
    base.loss.lambda = {a.lambda[0], a.lambda[1], a.lambda[2], a.lambda[3]};
  }
  base.adam.lr = a.lr;
  base.epochs = a.epochs;
  base.batch_size = a.batch_size;
  base.patience = a.patience;
  base.validation_fraction = a.validation_fraction;
  base.examples_per_epoch = a.examples_per_epoch;
  base.validation_cap = a.validation_cap;
  base.discretizer.step_hours = a.step_hours;
  base.seed = a.seed;
  base.model.Validate();
  base.loss.Validate();

  GridAxis grid;
  grid.hidden = a.grid_hidden.empty() ? std::vector<int>{a.hidden} : a.grid_hidden;
  grid.layers = a.grid_layers.empty() ? std::vector<int>{a.layers} : a.grid_layers;
  grid.dropout = a.grid_dropout.empty() ? std::vector<double>{a.dropout} : a.grid_dropout;
  grid.channel_units =
      a.grid_channel_units.empty() ? std::vector<int>{a.channel_units} : a.grid_channel_units;
  if (a.grid_lambdas) grid.lambdas = MultitaskWeightGrid();
  auto configs = ExpandGrid(base, grid);
  for (auto& c : configs) {
    c.model.Validate();
    c.jobs = configs.size() == 1 ? ctx.common.jobs : 1;
  }
  const TrainData data{&store, &t.variables, std::move(instances)};
  const auto ranking = GridSearch(data, configs, ctx.common.jobs);
  const GridEntry& best = ranking.front();
  WriteText(out / "ranking.csv", FormatRankingCsv(ranking));
  WriteText(out / "history.csv", FormatHistoryCsv(best.result));
  WriteText(out / "model_spec.txt", best.config.model.Serialize());
  WriteText(out / kStandardizerName, best.result.standardizer.Serialize());
  WriteSplit(best.result.validation_split, out / kValidationSplitName);
  if (best.result.failure) throw NumericError(*best.result.failure);
  for (Task trained : TrainedTasks(best.config.model)) {
    best.result.BestModel(trained, t.variables).Save(out / ModelFile(trained));
    *ctx.out << "train: " << a.model << " " << TaskName(trained) << " best epoch "
             << best.result.best.at(trained).epoch << " validation "
             << Fmt(best.result.best.at(trained).metric) << "\n";
  }
  const auto& bm = best.config.model;
  m.config["layers"] = std::to_string(bm.layers);
  m.config["hidden"] = std::to_string(bm.hidden);
  m.config["channel_units"] = std::to_string(bm.channel_units);
  m.config["dropout"] = Fmt(bm.dropout);
  m.config["bidirectional"] = bm.bidirectional ? "true" : "false";
  m.config["deep_supervision"] = bm.deep_supervision ? "true" : "false";
  m.config["multitask"] = bm.multitask ? "true" : "false";
  m.config["raw_los"] = bm.raw_los ? "true" : "false";
  m.config["gate_bias"] = bm.gate_bias ? "true" : "false";
  m.config["target_replication_alpha"] = Fmt(best.config.loss.alpha);
  const auto& l = best.config.loss.lambda;
  m.config["lambda"] = Fmt(l.decomp) + "," + Fmt(l.ihm) + "," + Fmt(l.los) + "," + Fmt(l.pheno);
  m.config["epochs"] = std::to_string(base.epochs);
  m.config["batch_size"] = std::to_string(base.EffectiveBatchSize());
  m.config["learning_rate"] = Fmt(base.adam.lr);
  m.config["patience"] = std::to_string(base.patience);
  m.config["step_hours"] = Fmt(base.discretizer.step_hours);
  m.config["grid_size"] = std::to_string(configs.size());
  m.seeds["model"] = std::to_string(bm.seed);
}

int RunTrain(const Context& ctx, const TrainArgs& a) {
  const bool linear = a.model == "linear";
  if (linear && (a.deep_supervision || a.multitask || a.alpha || a.bidirectional || a.raw_los)) {
    throw Usage("recurrent-model flags given to the linear model");
  }
  if (a.alpha && !a.deep_supervision) {
    throw Usage("--target-replication-alpha needs --deep-supervision");
  }
  const Task task = ParseTask(a.task);
  const fs::path data = OrDefault(a.data, DataRoot(ctx.common) / "benchmark");
  const std::string run_name = a.model + "-" + (a.multitask ? "multitask" : a.task);
  const fs::path out = OrDefault(a.out, DataRoot(ctx.common) / "runs" / run_name);
  RequireInput(data);
  const Tables t = LoadTables(ctx.common);
  const EpisodeStore store = LoadEpisodes(data, t.variables);
  std::map<Task, std::vector<TaskInstance>> instances;
  const std::vector<Task> tasks =
      a.multitask ? std::vector<Task>{Task::kIhm, Task::kDecomp, Task::kLos, Task::kPheno}
                  : std::vector<Task>{task};
  for (Task k : tasks) instances[k] = LoadTask(data, k, store).train;
  fs::create_directories(out);

  RunManifest m = NewManifest(ctx, "train");
  m.config["model"] = a.model;
  m.config["task"] = a.multitask ? "multitask" : a.task;
  m.config["data"] = data.generic_string();
  m.config["out"] = out.generic_string();
  m.config["validation_fraction"] = Fmt(a.validation_fraction);
  m.seeds["training"] = std::to_string(a.seed);
  m.inputs[data.generic_string()] = HashDirectory(data, kManifestName);
  if (linear) {
    TrainLinearModel(ctx, a, task, t, store, instances[task], out, m);
  } else {
    TrainRecurrentModel(ctx, a, task, t, store, std::move(instances), out, m);
  }
  RecordOutputs(m, out);
  m.Write(out / kManifestName);
  return 0;
}

// ------------------------------------------------------------- evaluate

std::string CheckpointFormat(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::string line;
  if (!in || !std::getline(in, line)) throw IoError("cannot read " + path.string());
  const std::string prefix = "format: ";
  if (line.rfind(prefix, 0) != 0) throw SchemaError(path.string() + ": not a checkpoint");
  return line.substr(prefix.size());
}

int RunEvaluate(const Context& ctx, const EvaluateArgs& a) {
  if (a.split == "test" && !a.final) {
    throw Error(ErrorCategory::kTestSplitRefused,
                "evaluation on the test split requires --final");
  }
  std::vector<Task> tasks;
  for (const auto& name : a.tasks) tasks.push_back(ParseTask(name));
  const fs::path data = OrDefault(a.data, DataRoot(ctx.common) / "benchmark");
  if (a.model.empty()) throw Usage("--model is required");
  const fs::path model_dir = a.model;
  const fs::path out = OrDefault(a.out, model_dir / ("eval-" + a.split));
  RequireInput(data);
  RequireInput(model_dir);
  if (tasks.empty()) {
    for (Task k : {Task::kIhm, Task::kDecomp, Task::kLos, Task::kPheno}) {
      if (fs::exists(model_dir / ModelFile(k))) tasks.push_back(k);
    }
    if (tasks.empty()) throw IoError("missing input: no model checkpoints in " + model_dir.string());
  }
  for (Task k : tasks) RequireInput(model_dir / ModelFile(k));

  const Tables t = LoadTables(ctx.common);
  const EpisodeStore store = LoadEpisodes(data, t.variables);
  std::optional<SplitManifest> val_split;
  if (a.split == "val") {
    RequireInput(model_dir / kValidationSplitName);
    val_split = ReadSplit(model_dir / kValidationSplitName);
  }
  std::map<Task, std::vector<TaskInstance>> instances;
  for (Task k : tasks) {
    const TaskSplit split = LoadTask(data, k, store);
    if (val_split) {
      for (const auto& inst : split.train) {
        if (val_split->IsTest(inst.patient_id)) instances[k].push_back(inst);
      }
    } else {
      instances[k] = split.test;
    }
  }

  fs::create_directories(out);
  RunManifest m = NewManifest(ctx, "evaluate");
  m.config["data"] = data.generic_string();
  m.config["model"] = model_dir.generic_string();
  m.config["split"] = a.split;
  m.config["out"] = out.generic_string();
  m.inputs[data.generic_string()] = HashDirectory(data, kManifestName);
  m.inputs[model_dir.generic_string()] = HashDirectory(model_dir, kManifestName);

  // Recurrent models share one standardized pool.
  std::optional<SequencePool> pool;
  std::map<Task, std::vector<Example>> examples;
  std::string metrics;
  for (Task k : tasks) {
    const fs::path ckpt = model_dir / ModelFile(k);
    const std::string format = CheckpointFormat(ckpt);
    Predictions p;
    if (format == "icubench-linear") {
      const LinearModel model = LoadLinearModel(ckpt);
      const nd::Matrix x = FeatureMatrix(instances[k], store, t.variables, ctx.common.jobs);
      p = LinearPredictions(model, k, instances[k], x);
    } else if (format == "icubench-rnn") {
      if (!pool) {
        RequireInput(model_dir / kStandardizerName);
        const Standardizer standardizer = Standardizer::Parse(
            ReadText(model_dir / kStandardizerName), (model_dir / kStandardizerName).string());
        pool.emplace(DiscretizerConfig{});
        ExampleBuilder builder(*pool);
        for (Task j : tasks) builder.Reserve(instances[j]);
        for (Task j : tasks) examples[j] = builder.Ungrouped(instances[j], j);
        pool->Build(store, t.variables, ctx.common.jobs);
        pool->Standardize(standardizer);
      }
      SequenceModel model = SequenceModel::Load(ckpt, t.variables);
      p = Predict(model, *pool, examples[k], a.batch_size);
    } else {
      throw SchemaError(ckpt.string() + ": unknown checkpoint format '" + format + "'");
    }
    WritePredictions(k, p, out / PredictionFile(k));
    metrics += FormatMetrics(k, p);
  }
  WriteText(out / "metrics.txt", metrics);
  RecordOutputs(m, out);
  m.Write(out / kManifestName);
  *ctx.out << metrics;
  return 0;
}

// --------------------------------------------------------------- report

int RunReport(const Context& ctx, const ReportArgs& a) {
  if (a.eval.empty()) throw Usage("--eval is required");
  if (a.bootstrap < 1) throw Usage("--bootstrap must be positive");
  const fs::path eval = a.eval;
  const fs::path out = OrDefault(a.out, eval / "report");
  RequireInput(eval);
  std::vector<Task> tasks;
  for (Task k : {Task::kIhm, Task::kDecomp, Task::kLos, Task::kPheno}) {
    if (fs::exists(eval / PredictionFile(k))) tasks.push_back(k);
  }
  if (tasks.empty()) throw IoError("missing input: no prediction files in " + eval.string());
  if (!a.data.empty()) RequireInput(a.data);

  fs::create_directories(out);
  RunManifest m = NewManifest(ctx, "report");
  m.config["eval"] = eval.generic_string();
  m.config["out"] = out.generic_string();
  m.config["bootstrap"] = std::to_string(a.bootstrap);
  m.config["bins"] = std::to_string(a.bins);
  m.seeds["bootstrap"] = std::to_string(a.seed);
  m.inputs[eval.generic_string()] = HashDirectory(eval, kManifestName);

  std::string report;
  std::string ci_csv = "task,metric,point,lower,upper,resamples,redrawn,unit\n";
  for (Task k : tasks) {
    const Predictions p = ReadPredictions(k, eval / PredictionFile(k));
    const std::string unit = k == Task::kIhm || k == Task::kPheno ? "stay" : "instance";
    const size_t n = Rows(k, p);
    report += std::string(TaskName(k)) + ".instances: " + std::to_string(n) + "\n";
    std::uint64_t stream = 0;
    for (const auto& [name, fn] : TaskMetrics(k, p)) {
      const std::string key = std::string(TaskName(k)) + "." + name;
      try {
        const auto ci = BootstrapCi(
            [&, fn = fn](std::span<const size_t> rows) { return fn(p, rows); }, n, a.bootstrap,
            a.seed + 1000003ULL * (stream++), ctx.common.jobs);
        report += key + ": " + Fmt(ci.point) + " [" + Fmt(ci.lower) + ", " + Fmt(ci.upper) + "]\n";
        ci_csv += std::string(TaskName(k)) + "," + name + "," + Fmt(ci.point) + "," +
                  Fmt(ci.lower) + "," + Fmt(ci.upper) + "," + std::to_string(ci.resamples) +
                  "," + std::to_string(ci.redrawn) + "," + unit + "\n";
      } catch (const UndefinedMetricError& e) {
        report += key + ": undefined (" + e.what() + ")\n";
      }
    }
    if (k == Task::kIhm || k == Task::kDecomp) {
      const auto& s = k == Task::kIhm ? p.ihm_score : p.decomp_score;
      const auto& y = k == Task::kIhm ? p.ihm_label : p.decomp_label;
      if (!s.empty()) {
        const auto curve = Calibration(s, y, a.bins);
        WriteText(out / (std::string("calibration_") + TaskName(k) + ".csv"),
                  FormatCalibrationCsv(curve));
        double worst = 0.0;
        for (const auto& b : curve.bins) {
          worst = std::max(worst, std::abs(b.mean_predicted - b.observed_rate));
        }
        report += std::string(TaskName(k)) + ".calibration_max_gap: " + Fmt(worst) + "\n";
        report += std::string(TaskName(k)) + ".calibration_merged_bins: " +
                  std::to_string(curve.merged_bins) + "\n";
      }
    }
    if (k == Task::kLos) {
      if (const auto ext = ExtendedLos(p)) {
        report += "los.extended_los_auc_roc: " + Fmt(ext->auc_roc) + "\n";
        report += "los.extended_los_skipped_stays: " + std::to_string(ext->skipped_stays) + "\n";
      }
    }
  }
  WriteText(out / "confidence_intervals.csv", ci_csv);
  if (!a.data.empty()) {
    const Tables t = LoadTables(ctx.common);
    const EpisodeStore store = LoadEpisodes(a.data, t.variables);
    std::vector<MultitaskTargets> targets;
    for (const auto& ep : store.episodes()) {
      targets.push_back(BuildMultitaskTargets(ep, t.phenotypes));
    }
    WriteText(out / "correlations.csv", FormatCorrelationCsv(TaskLabelCorrelations(targets)));
    m.inputs[a.data] = HashDirectory(a.data, kManifestName);
  }
  WriteText(out / "report.txt", report);
  RecordOutputs(m, out);
  m.Write(out / kManifestName);
  *ctx.out << report;
  return 0;
}

void AddCommon(CLI::App* sub, Common& c) {
  sub->add_option("--jobs", c.jobs, "Worker threads; 1 is the serial path")
      ->check(CLI::PositiveNumber);
  sub->add_option("--root", c.root,
                  std::string("Data root for default paths (default $") + kDataRootEnv +
                      " or .)");
  sub->add_option("--variables", c.variables, "Variable config file (default built in)");
  sub->add_option("--phenotypes", c.phenotypes, "Phenotype config file (default built in)");
}

const std::vector<std::string> kTaskNames = {"ihm", "decomp", "los", "pheno"};

}  // namespace

int ExitCode(ErrorCategory category) {
  switch (category) {
    case ErrorCategory::kInternal: return 1;
    case ErrorCategory::kUsage: return 2;
    case ErrorCategory::kDomain: return 3;
    case ErrorCategory::kConfig: return 4;
    case ErrorCategory::kSchema: return 5;
    case ErrorCategory::kIo: return 6;
    case ErrorCategory::kShape: return 7;
    case ErrorCategory::kUndefinedMetric: return 8;
    case ErrorCategory::kContract: return 9;
    case ErrorCategory::kNumeric: return 10;
    case ErrorCategory::kTestSplitRefused: return 11;
  }
  return 1;
}

int RunCli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"icubench: clinical time-series benchmark pipeline, models and metrics",
               "icubench"};
  app.require_subcommand(1, 1);
  app.set_config("--config", "", "INI/TOML run configuration; unknown keys are rejected");
  app.allow_config_extras(CLI::config_extras_mode::error);

  Context ctx;
  ctx.arguments = args;
  ctx.out = &out;
  SynthArgs synth;
  BuildArgs build;
  FeaturesArgs features;
  TrainArgs train;
  EvaluateArgs evaluate;
  ReportArgs report;

  auto* s = app.add_subcommand("synth", "Generate MIMIC-shaped synthetic tables");
  AddCommon(s, ctx.common);
  s->add_option("--out", synth.out, "Output directory (default <root>/tables)");
  s->add_option("--seed", synth.seed, "Generator seed");
  s->add_option("--patients", synth.patients, "Number of patients")->check(CLI::PositiveNumber);
  s->add_option("--signal-strength", synth.signal_strength, "Planted signal in [0, 1]")
      ->check(CLI::Range(0.0, 1.0));
  s->add_option("--signal-kind", synth.signal_kind, "linear or xor")
      ->check(CLI::IsMember({"linear", "xor"}));
  s->add_option("--mortality-rate", synth.mortality_rate, "In-hospital mortality rate")
      ->check(CLI::Range(0.0, 1.0));
  s->add_option("--event-rate-scale", synth.event_rate_scale, "Multiplier on event rates")
      ->check(CLI::PositiveNumber);
  s->add_flag("--no-anomalies", synth.no_anomalies, "Disable planted data anomalies");

  auto* b = app.add_subcommand(
      "build", "Extract subjects, validate events, extract episodes, split and build tasks");
  AddCommon(b, ctx.common);
  b->add_option("--tables", build.tables, "Raw table directory (default <root>/tables)");
  b->add_option("--out", build.out, "Benchmark directory (default <root>/benchmark)");
  b->add_option("--split-seed", build.split_seed, "Train/test split seed");
  b->add_option("--test-fraction", build.test_fraction, "Fraction of test patients")
      ->check(CLI::Range(0.0, 1.0));

  auto* f = app.add_subcommand("features", "Write the 714 hand-engineered features");
  AddCommon(f, ctx.common);
  f->add_option("--data", features.data, "Benchmark directory (default <root>/benchmark)");
  f->add_option("--task", features.task, "ihm, decomp, los or pheno")->check(CLI::IsMember(kTaskNames));
  f->add_option("--split", features.split, "train or test")->check(CLI::IsMember({"train", "test"}));
  f->add_option("--out", features.out, "Output CSV");

  auto* tr = app.add_subcommand("train", "Train a linear, LSTM or channel-wise LSTM model");
  AddCommon(tr, ctx.common);
  tr->add_option("model", train.model, "linear, lstm or channelwise")
      ->required()
      ->check(CLI::IsMember({"linear", "lstm", "channelwise"}));
  tr->add_option("--data", train.data, "Benchmark directory (default <root>/benchmark)");
  tr->add_option("--task", train.task, "ihm, decomp, los or pheno")->check(CLI::IsMember(kTaskNames));
  tr->add_option("--out", train.out, "Run directory (default <root>/runs/<model>-<task>)");
  tr->add_option("--seed", train.seed, "Seed for splits, initialization and shuffling");
  tr->add_option("--validation-fraction", train.validation_fraction,
                 "Patient fraction held out for validation")
      ->check(CLI::Range(0.0, 1.0));
  tr->add_flag("--deep-supervision", train.deep_supervision, "Predict at every step");
  tr->add_flag("--multitask", train.multitask, "Train all four task heads jointly");
  tr->add_option("--target-replication-alpha", train.alpha,
                 "Weight of replicated targets under deep supervision")
      ->check(CLI::Range(0.0, 1.0));
  tr->add_option("--layers", train.layers, "Recurrent layers (1 or 2)");
  tr->add_option("--hidden", train.hidden, "Hidden units");
  tr->add_option("--channel-units", train.channel_units, "Units per channel (channelwise)");
  tr->add_option("--dropout", train.dropout, "Dropout probability")->check(CLI::Range(0.0, 1.0));
  tr->add_flag("--bidirectional", train.bidirectional, "Bidirectional lower layers");
  tr->add_flag("--raw-los", train.raw_los, "Regress LOS in days instead of buckets");
  tr->add_flag("--gate-bias", train.gate_bias, "Bias on input and forget gates");
  tr->add_option("--epochs", train.epochs, "Training epochs")->check(CLI::PositiveNumber);
  tr->add_option("--batch-size", train.batch_size, "Batch size (0 picks a default)");
  tr->add_option("--lr", train.lr, "Adam learning rate");
  tr->add_option("--patience", train.patience, "Early-stopping patience (0 disables)");
  tr->add_option("--examples-per-epoch", train.examples_per_epoch, "Examples drawn per epoch");
  tr->add_option("--validation-cap", train.validation_cap, "Cap on validation examples");
  tr->add_option("--step-hours", train.step_hours, "Discretization step")
      ->check(CLI::PositiveNumber);
  tr->add_option("--lambda", train.lambda, "Multitask weights decomp,ihm,los,pheno")
      ->delimiter(',');
  tr->add_option("--grid-hidden", train.grid_hidden, "Grid over hidden units")->delimiter(',');
  tr->add_option("--grid-layers", train.grid_layers, "Grid over layers")->delimiter(',');
  tr->add_option("--grid-dropout", train.grid_dropout, "Grid over dropout")->delimiter(',');
  tr->add_option("--grid-channel-units", train.grid_channel_units, "Grid over channel units")
      ->delimiter(',');
  tr->add_flag("--grid-lambdas", train.grid_lambdas, "Search the five multitask weightings");
  tr->add_option("--C", train.c_values, "Inverse regularization strengths (linear)")
      ->delimiter(',');
  tr->add_option("--regularization", train.regularization, "l1 or l2 (linear)")
      ->check(CLI::IsMember({"l1", "l2"}));
  tr->add_option("--max-instances", train.max_instances, "Training instance cap (linear)")
      ->check(CLI::PositiveNumber);
  tr->add_option("--max-iterations", train.max_iterations, "Solver iterations (linear)")
      ->check(CLI::PositiveNumber);
  tr->add_option("--tolerance", train.tolerance, "Solver tolerance (linear)")
      ->check(CLI::PositiveNumber);

  auto* ev = app.add_subcommand("evaluate", "Score a trained run on the validation or test split");
  AddCommon(ev, ctx.common);
  ev->add_option("--data", evaluate.data, "Benchmark directory (default <root>/benchmark)");
  ev->add_option("--model", evaluate.model, "Run directory written by train");
  ev->add_option("--split", evaluate.split, "val or test")->check(CLI::IsMember({"val", "test"}));
  ev->add_flag("--final", evaluate.final, "Allow the test split");
  ev->add_option("--task", evaluate.tasks, "Tasks to score (default all trained)")
      ->check(CLI::IsMember(kTaskNames));
  ev->add_option("--out", evaluate.out, "Output directory (default <model>/eval-<split>)");
  ev->add_option("--batch-size", evaluate.batch_size, "Inference batch size")
      ->check(CLI::PositiveNumber);

  auto* rp = app.add_subcommand(
      "report", "Metrics with bootstrap intervals, calibration and label correlations");
  AddCommon(rp, ctx.common);
  rp->add_option("--eval", report.eval, "Directory written by evaluate");
  rp->add_option("--out", report.out, "Output directory (default <eval>/report)");
  rp->add_option("--data", report.data, "Benchmark directory for label correlations");
  rp->add_option("--bootstrap", report.bootstrap, "Bootstrap resamples");
  rp->add_option("--seed", report.seed, "Bootstrap seed");
  rp->add_option("--bins", report.bins, "Calibration bins")->check(CLI::PositiveNumber);

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ConfigError& e) {
    err << "icubench: error[" << ErrorCategoryName(ErrorCategory::kConfig) << "]: " << e.what()
        << "\n";
    return ExitCode(ErrorCategory::kConfig);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : ExitCode(ErrorCategory::kUsage);
  }

  const auto report_error = [&](ErrorCategory category, const std::string& message) {
    err << "icubench: error[" << ErrorCategoryName(category) << "]: " << message << "\n";
    return ExitCode(category);
  };
  try {
    if (s->parsed()) return RunSynth(ctx, synth);
    if (b->parsed()) return RunBuild(ctx, build);
    if (f->parsed()) return RunFeatures(ctx, features);
    if (tr->parsed()) return RunTrain(ctx, train);
    if (ev->parsed()) return RunEvaluate(ctx, evaluate);
    return RunReport(ctx, report);
  } catch (const Error& e) {
    return report_error(e.category(), e.what());
  } catch (const fs::filesystem_error& e) {
    return report_error(ErrorCategory::kIo, e.what());
  } catch (const std::exception& e) {
    return report_error(ErrorCategory::kInternal, e.what());
  }
}

}  // namespace icubench::cli
