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

#include "icubench/dataset.h"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

#include "block_config.h"
#include "icubench/csv.h"
#include "icubench/error.h"
#include "icubench/timeutil.h"

namespace icubench {
namespace {

namespace fs = std::filesystem;

std::string OptionalDouble(const std::optional<double>& value) {
  return value ? FormatDouble(*value) : "";
}

std::string FormatValue(const VariableSpec& spec, double value) {
  if (spec.is_categorical()) return spec.categories.at(static_cast<size_t>(value));
  return FormatDouble(value);
}

void WriteEpisode(const EpisodeTimeline& episode, const fs::path& path,
                  const VariableTable& variables) {
  CsvWriter writer(path);
  std::vector<std::string> row(variables.size() + 1);
  row[0] = "Hours";
  for (int v = 0; v < variables.size(); ++v) row[v + 1] = variables[v].name;
  writer.WriteRow(row);

  // One row per distinct time; a variable charted twice at the same time
  // spills into an extra row.
  size_t i = 0;
  const auto& events = episode.events;
  while (i < events.size()) {
    size_t j = i;
    while (j < events.size() && events[j].hours == events[i].hours) ++j;
    std::vector<std::vector<std::string>> rows;
    for (size_t k = i; k < j; ++k) {
      const auto& e = events[k];
      size_t r = 0;
      while (r < rows.size() && !rows[r][e.variable + 1].empty()) ++r;
      if (r == rows.size()) {
        rows.emplace_back(variables.size() + 1);
        rows.back()[0] = FormatDouble(e.hours);
      }
      rows[r][e.variable + 1] = FormatValue(variables[e.variable], e.value);
    }
    for (const auto& out : rows) writer.WriteRow(out);
    i = j;
  }
  writer.Close();
}

std::vector<TimelineEvent> ReadEpisodeEvents(const fs::path& path,
                                             const VariableTable& variables) {
  CsvReader reader(path);
  const int hours_column = reader.ColumnIndex("Hours");
  std::vector<int> columns(variables.size());
  for (int v = 0; v < variables.size(); ++v) {
    columns[v] = reader.ColumnIndex(variables[v].name);
  }
  std::vector<TimelineEvent> events;
  std::vector<std::string> row;
  while (reader.Next(row)) {
    const auto hours = internal::ParseDouble(row[hours_column]);
    if (!hours) {
      throw SchemaError(path.string() + " record " +
                        std::to_string(reader.record_number()) + ": bad Hours");
    }
    for (int v = 0; v < variables.size(); ++v) {
      const std::string& text = row[columns[v]];
      if (text.empty()) continue;
      const auto& spec = variables[v];
      std::optional<double> value;
      if (spec.is_categorical()) {
        if (const auto c = spec.CategoryIndex(text)) value = *c;
      } else {
        value = internal::ParseDouble(text);
      }
      if (!value) {
        throw SchemaError(path.string() + " record " +
                          std::to_string(reader.record_number()) +
                          ": bad value for '" + spec.name + "'");
      }
      events.push_back({*hours, v, *value});
    }
  }
  CanonicalizeEvents(events);
  return events;
}

std::string JoinCodes(const std::vector<std::string>& codes) {
  std::string out;
  for (size_t i = 0; i < codes.size(); ++i) {
    if (i > 0) out += ';';
    out += codes[i];
  }
  return out;
}

std::vector<std::string> SplitCodes(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream in(text);
  std::string code;
  while (std::getline(in, code, ';')) {
    if (!code.empty()) out.push_back(code);
  }
  return out;
}

void WriteListfile(const std::vector<TaskInstance>& instances, Task task,
                   const fs::path& path) {
  CsvWriter writer(path);
  std::vector<std::string> header = {"stay"};
  if (task != Task::kIhm) header.push_back("period_length");
  if (task == Task::kPheno) {
    for (int k = 0; k < kNumPhenotypes; ++k) header.push_back("y_" + std::to_string(k));
  } else {
    header.push_back("y_true");
  }
  writer.WriteRow(header);
  std::vector<std::string> row;
  for (const auto& inst : instances) {
    row = {EpisodeFileName(inst.stay_id)};
    switch (task) {
      case Task::kIhm:
        row.push_back(std::to_string(inst.label));
        break;
      case Task::kDecomp:
        row.push_back(FormatDouble(inst.window_end_hours));
        row.push_back(std::to_string(inst.label));
        break;
      case Task::kLos:
        row.push_back(FormatDouble(inst.window_end_hours));
        row.push_back(FormatDouble(inst.los_hours));
        break;
      case Task::kPheno:
        row.push_back(FormatDouble(inst.window_end_hours));
        for (int bit : inst.phenotypes) row.push_back(std::to_string(bit));
        break;
    }
    writer.WriteRow(row);
  }
  writer.Close();
}

std::int64_t StayFromFileName(const std::string& name, const fs::path& source) {
  const std::string suffix = "_timeseries.csv";
  const auto id = name.size() > suffix.size() &&
                          name.compare(name.size() - suffix.size(), suffix.size(),
                                       suffix) == 0
                      ? internal::ParseInt(name.substr(0, name.size() - suffix.size()))
                      : std::nullopt;
  if (!id) throw SchemaError(source.string() + ": bad stay reference '" + name + "'");
  return *id;
}

}  // namespace

const TaskSplit& Benchmark::task(Task t) const {
  switch (t) {
    case Task::kIhm:
      return ihm;
    case Task::kDecomp:
      return decomp;
    case Task::kLos:
      return los;
    case Task::kPheno:
      return pheno;
  }
  throw Error(ErrorCategory::kInternal, "unknown task");
}

Benchmark BuildBenchmark(const fs::path& tables_dir, const VariableTable& variables,
                         const PhenotypeMap& phenotypes, const BuildOptions& options) {
  Benchmark out;
  SubjectStore store = ExtractSubjects(tables_dir);
  ValidateEvents(store);
  out.episodes = ExtractEpisodes(store, variables);
  out.report = std::move(store.report);
  out.manifest =
      SplitTrainTest(PatientIds(out.episodes), options.test_fraction, options.split_seed);
  out.ihm = BuildIhm(out.episodes, out.manifest, &out.report);
  out.decomp = BuildDecomp(out.episodes, out.manifest, &out.report);
  out.los = BuildLos(out.episodes, out.manifest, &out.report);
  out.pheno = BuildPheno(out.episodes, out.manifest, phenotypes, &out.report);
  return out;
}

const char* TaskDirectory(Task task) {
  switch (task) {
    case Task::kIhm:
      return "in-hospital-mortality";
    case Task::kDecomp:
      return "decompensation";
    case Task::kLos:
      return "length-of-stay";
    case Task::kPheno:
      return "phenotyping";
  }
  return "";
}

std::string EpisodeFileName(std::int64_t stay_id) {
  return std::to_string(stay_id) + "_timeseries.csv";
}

void WriteBenchmark(const Benchmark& benchmark, const fs::path& out_dir,
                    const VariableTable& variables) {
  fs::create_directories(out_dir / "episodes");
  for (const auto& episode : benchmark.episodes) {
    WriteEpisode(episode, out_dir / "episodes" / EpisodeFileName(episode.stay_id),
                 variables);
  }
  {
    CsvWriter writer(out_dir / "stays.csv");
    writer.WriteRow({"STAY_ID", "SUBJECT_ID", "HADM_ID", "INTIME", "OUTTIME",
                     "LOS_HOURS", "AGE", "MORTALITY", "DOD_HOURS", "DIAGNOSES"});
    for (const auto& ep : benchmark.episodes) {
      writer.WriteRow({std::to_string(ep.stay_id), std::to_string(ep.patient_id),
                       std::to_string(ep.admission_id), FormatTimestamp(ep.intime),
                       ep.outtime ? FormatTimestamp(*ep.outtime) : "",
                       OptionalDouble(ep.los_hours), FormatDouble(ep.age_years),
                       ep.mortality_inhospital ? "1" : "0",
                       OptionalDouble(ep.dod_hours), JoinCodes(ep.diagnoses)});
    }
    writer.Close();
  }
  WriteSplit(benchmark.manifest, out_dir / "split.txt");
  {
    std::ofstream report(out_dir / "cohort_report.txt", std::ios::binary);
    report << benchmark.report.Format();
    if (!report) throw IoError("cannot write " + (out_dir / "cohort_report.txt").string());
  }
  for (Task task : {Task::kIhm, Task::kDecomp, Task::kLos, Task::kPheno}) {
    const fs::path dir = out_dir / TaskDirectory(task);
    fs::create_directories(dir);
    WriteListfile(benchmark.task(task).train, task, dir / "train_listfile.csv");
    WriteListfile(benchmark.task(task).test, task, dir / "test_listfile.csv");
  }
}

EpisodeStore::EpisodeStore(std::vector<EpisodeTimeline> episodes,
                           SplitManifest manifest)
    : episodes_(std::move(episodes)), manifest_(std::move(manifest)) {
  for (size_t i = 0; i < episodes_.size(); ++i) {
    if (!index_.emplace(episodes_[i].stay_id, i).second) {
      throw SchemaError("duplicate stay " + std::to_string(episodes_[i].stay_id));
    }
  }
}

const EpisodeTimeline& EpisodeStore::Find(std::int64_t stay_id) const {
  const auto it = index_.find(stay_id);
  if (it == index_.end()) {
    throw SchemaError("unknown stay " + std::to_string(stay_id));
  }
  return episodes_[it->second];
}

EpisodeStore LoadEpisodes(const fs::path& root, const VariableTable& variables) {
  CsvReader reader(root / "stays.csv");
  const int c_stay = reader.ColumnIndex("STAY_ID");
  const int c_subject = reader.ColumnIndex("SUBJECT_ID");
  const int c_hadm = reader.ColumnIndex("HADM_ID");
  const int c_in = reader.ColumnIndex("INTIME");
  const int c_out = reader.ColumnIndex("OUTTIME");
  const int c_los = reader.ColumnIndex("LOS_HOURS");
  const int c_age = reader.ColumnIndex("AGE");
  const int c_mort = reader.ColumnIndex("MORTALITY");
  const int c_dod = reader.ColumnIndex("DOD_HOURS");
  const int c_diag = reader.ColumnIndex("DIAGNOSES");
  std::vector<EpisodeTimeline> episodes;
  std::vector<std::string> row;
  while (reader.Next(row)) {
    const auto fail = [&](const char* what) {
      return SchemaError(reader.source() + " record " +
                         std::to_string(reader.record_number()) + ": bad " + what);
    };
    EpisodeTimeline ep;
    const auto stay = internal::ParseInt(row[c_stay]);
    const auto subject = internal::ParseInt(row[c_subject]);
    const auto hadm = internal::ParseInt(row[c_hadm]);
    const auto intime = ParseTimestamp(row[c_in]);
    const auto age = internal::ParseDouble(row[c_age]);
    if (!stay || !subject || !hadm) throw fail("identifier");
    if (!intime) throw fail("INTIME");
    if (!age) throw fail("AGE");
    ep.stay_id = *stay;
    ep.patient_id = *subject;
    ep.admission_id = *hadm;
    ep.intime = *intime;
    if (!row[c_out].empty()) {
      ep.outtime = ParseTimestamp(row[c_out]);
      if (!ep.outtime) throw fail("OUTTIME");
    }
    if (!row[c_los].empty()) {
      ep.los_hours = internal::ParseDouble(row[c_los]);
      if (!ep.los_hours) throw fail("LOS_HOURS");
    }
    ep.age_years = *age;
    ep.mortality_inhospital = row[c_mort] == "1";
    if (!row[c_dod].empty()) {
      ep.dod_hours = internal::ParseDouble(row[c_dod]);
      if (!ep.dod_hours) throw fail("DOD_HOURS");
    }
    if (ep.dod_hours.has_value() != ep.mortality_inhospital) {
      throw fail("DOD_HOURS (must be set iff MORTALITY is 1)");
    }
    ep.diagnoses = SplitCodes(row[c_diag]);
    ep.events = ReadEpisodeEvents(root / "episodes" / EpisodeFileName(ep.stay_id),
                                  variables);
    episodes.push_back(std::move(ep));
  }
  std::sort(episodes.begin(), episodes.end(),
            [](const auto& a, const auto& b) { return a.stay_id < b.stay_id; });
  return EpisodeStore(std::move(episodes), ReadSplit(root / "split.txt"));
}

std::vector<TaskInstance> ReadListfile(const fs::path& path, Task task,
                                       const EpisodeStore& store) {
  CsvReader reader(path);
  const int c_stay = reader.ColumnIndex("stay");
  const int c_period = task == Task::kIhm ? -1 : reader.ColumnIndex("period_length");
  std::vector<int> c_labels;
  if (task == Task::kPheno) {
    for (int k = 0; k < kNumPhenotypes; ++k) {
      c_labels.push_back(reader.ColumnIndex("y_" + std::to_string(k)));
    }
  } else {
    c_labels.push_back(reader.ColumnIndex("y_true"));
  }
  std::vector<TaskInstance> out;
  std::vector<std::string> row;
  while (reader.Next(row)) {
    const auto fail = [&](const std::string& what) {
      return SchemaError(reader.source() + " record " +
                         std::to_string(reader.record_number()) + ": " + what);
    };
    TaskInstance inst;
    inst.stay_id = StayFromFileName(row[c_stay], path);
    if (!store.Contains(inst.stay_id)) throw fail("stay not in stays.csv");
    inst.patient_id = store.Find(inst.stay_id).patient_id;
    inst.task = task;
    if (c_period >= 0) {
      const auto period = internal::ParseDouble(row[c_period]);
      if (!period || *period <= 0.0) throw fail("bad period_length");
      inst.window_end_hours = *period;
    } else {
      inst.window_end_hours = kIhmWindowHours;
    }
    if (task == Task::kLos) {
      const auto y = internal::ParseDouble(row[c_labels[0]]);
      if (!y || *y < 0.0) throw fail("bad y_true");
      inst.los_hours = *y;
      inst.los_bucket = Bucketize(*y / 24.0);
    } else {
      for (int column : c_labels) {
        const std::string& text = row[column];
        if (text != "0" && text != "1") throw fail("label must be 0 or 1");
        if (task == Task::kPheno) {
          inst.phenotypes.push_back(text == "1");
        } else {
          inst.label = text == "1";
        }
      }
    }
    out.push_back(std::move(inst));
  }
  return out;
}

TaskSplit LoadTask(const fs::path& root, Task task, const EpisodeStore& store) {
  const fs::path dir = root / TaskDirectory(task);
  return {ReadListfile(dir / "train_listfile.csv", task, store),
          ReadListfile(dir / "test_listfile.csv", task, store)};
}

void WriteSplit(const SplitManifest& manifest, const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  out << "seed: " << manifest.seed << "\n";
  out << "fraction: " << FormatDouble(manifest.fraction) << "\n";
  for (const auto id : manifest.test_patients) out << "test_patient: " << id << "\n";
  if (!out) throw IoError("cannot write " + path.string());
}

SplitManifest ReadSplit(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  SplitManifest manifest;
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (internal::Trim(line).empty()) continue;
    const size_t colon = line.find(':');
    if (colon == std::string::npos) {
      throw ConfigError(path.string(), number, "expected 'key: value'");
    }
    const auto key = internal::Trim(std::string_view(line).substr(0, colon));
    const auto value = std::string(internal::Trim(std::string_view(line).substr(colon + 1)));
    if (key == "seed") {
      const auto [ptr, ec] =
          std::from_chars(value.data(), value.data() + value.size(), manifest.seed);
      if (ec != std::errc() || ptr != value.data() + value.size()) {
        throw ConfigError(path.string(), number, "bad seed");
      }
    } else if (key == "fraction") {
      const auto fraction = internal::ParseDouble(value);
      if (!fraction) throw ConfigError(path.string(), number, "bad fraction");
      manifest.fraction = *fraction;
    } else if (key == "test_patient") {
      const auto id = internal::ParseInt(value);
      if (!id) throw ConfigError(path.string(), number, "bad patient id");
      manifest.test_patients.insert(*id);
    } else {
      throw ConfigError(path.string(), number, "unknown key '" + std::string(key) + "'");
    }
  }
  return manifest;
}

}  // namespace icubench
