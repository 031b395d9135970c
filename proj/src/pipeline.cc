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

#include "icubench/pipeline.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <tuple>
#include <unordered_map>

#include "block_config.h"
#include "icubench/csv.h"
#include "icubench/error.h"
#include "icubench/timeutil.h"

namespace icubench {
namespace {

constexpr double kShiftedAgeThreshold = 120.0;
constexpr double kShiftedAge = 90.0;
constexpr double kAdultAge = 18.0;
constexpr size_t kMaxStoredRowErrors = 100;

std::optional<std::int64_t> ParseId(const std::string& text) {
  const auto value = internal::ParseInt(text);
  if (!value) return std::nullopt;
  return static_cast<std::int64_t>(*value);
}

std::string RowContext(const CsvReader& reader) {
  return reader.source() + " record " + std::to_string(reader.record_number());
}

}  // namespace

std::int64_t CohortReport::Stage::Dropped(const std::string& reason) const {
  const auto it = dropped.find(reason);
  return it == dropped.end() ? 0 : it->second;
}

std::int64_t CohortReport::Stage::TotalDropped() const {
  std::int64_t total = 0;
  for (const auto& [reason, count] : dropped) total += count;
  return total;
}

CohortReport::Stage& CohortReport::stage(const std::string& name) {
  for (auto& s : stages_) {
    if (s.name == name) return s;
  }
  stages_.push_back(Stage{name, 0, 0, {}, {}});
  return stages_.back();
}

const CohortReport::Stage* CohortReport::Find(const std::string& name) const {
  for (const auto& s : stages_) {
    if (s.name == name) return &s;
  }
  return nullptr;
}

void CohortReport::AddRowError(std::string message) {
  ++row_error_count_;
  if (row_errors_.size() < kMaxStoredRowErrors) {
    row_errors_.push_back(std::move(message));
  }
}

bool CohortReport::Reconciles() const {
  return std::all_of(stages_.begin(), stages_.end(),
                     [](const Stage& s) { return s.Reconciles(); });
}

std::string CohortReport::Format() const {
  std::string out;
  for (const auto& s : stages_) {
    out += s.name + ".input: " + std::to_string(s.input) + "\n";
    out += s.name + ".kept: " + std::to_string(s.kept) + "\n";
    for (const auto& [reason, count] : s.dropped) {
      out += s.name + ".dropped." + reason + ": " + std::to_string(count) + "\n";
    }
    for (const auto& [key, count] : s.notes) {
      out += s.name + ".note." + key + ": " + std::to_string(count) + "\n";
    }
  }
  out += "row_errors: " + std::to_string(row_error_count_) + "\n";
  for (const auto& message : row_errors_) out += "row_error: " + message + "\n";
  return out;
}

SubjectStore ExtractSubjects(const std::filesystem::path& tables_dir) {
  SubjectStore store;
  auto& report = store.report;
  std::vector<std::string> row;

  // PATIENTS
  std::map<std::int64_t, PatientRecord> patients;
  {
    CsvReader reader(tables_dir / "PATIENTS.csv");
    const int c_subject = reader.ColumnIndex("SUBJECT_ID");
    const int c_gender = reader.ColumnIndex("GENDER");
    const int c_dob = reader.ColumnIndex("DOB");
    const int c_dod = reader.ColumnIndex("DOD");
    auto& stage = report.stage("patients");
    while (reader.Next(row)) {
      ++stage.input;
      const auto subject = ParseId(row[c_subject]);
      const auto dob = ParseTimestamp(row[c_dob]);
      std::optional<Timestamp> dod;
      const bool dod_ok = internal::Trim(row[c_dod]).empty() ||
                          (dod = ParseTimestamp(row[c_dod])).has_value();
      if (!subject || !dob || !dod_ok) {
        report.AddRowError(RowContext(reader) + ": unparseable patient row");
        ++stage.dropped["bad_row"];
        continue;
      }
      PatientRecord patient;
      patient.subject_id = *subject;
      patient.gender = row[c_gender];
      patient.dob = *dob;
      patient.dod = dod;
      if (!patients.emplace(*subject, std::move(patient)).second) {
        report.AddRowError(RowContext(reader) + ": duplicate SUBJECT_ID");
        ++stage.dropped["duplicate"];
      }
    }
  }

  // ADMISSIONS
  std::unordered_map<std::int64_t, std::pair<std::int64_t, AdmissionRecord>>
      admissions;
  std::vector<std::int64_t> admission_order;
  auto& adm_stage = report.stage("admissions");
  {
    CsvReader reader(tables_dir / "ADMISSIONS.csv");
    const int c_subject = reader.ColumnIndex("SUBJECT_ID");
    const int c_hadm = reader.ColumnIndex("HADM_ID");
    const int c_admit = reader.ColumnIndex("ADMITTIME");
    const int c_disch = reader.ColumnIndex("DISCHTIME");
    const int c_death = reader.ColumnIndex("DEATHTIME");
    while (reader.Next(row)) {
      ++adm_stage.input;
      const auto subject = ParseId(row[c_subject]);
      const auto hadm = ParseId(row[c_hadm]);
      const auto admit = ParseTimestamp(row[c_admit]);
      const auto disch = ParseTimestamp(row[c_disch]);
      std::optional<Timestamp> death;
      const bool death_ok = internal::Trim(row[c_death]).empty() ||
                            (death = ParseTimestamp(row[c_death])).has_value();
      if (!subject || !hadm || !admit || !disch || !death_ok) {
        report.AddRowError(RowContext(reader) + ": unparseable admission row");
        ++adm_stage.dropped["bad_row"];
        continue;
      }
      if (!patients.contains(*subject)) {
        ++adm_stage.dropped["unknown_patient"];
        continue;
      }
      AdmissionRecord admission;
      admission.admission_id = *hadm;
      admission.admittime = *admit;
      admission.dischtime = *disch;
      admission.deathtime = death;
      if (!admissions.emplace(*hadm, std::pair{*subject, std::move(admission)})
               .second) {
        report.AddRowError(RowContext(reader) + ": duplicate HADM_ID");
        ++adm_stage.dropped["duplicate"];
        continue;
      }
      admission_order.push_back(*hadm);
    }
  }

  // ICUSTAYS
  auto& stay_stage = report.stage("stays");
  {
    CsvReader reader(tables_dir / "ICUSTAYS.csv");
    const int c_hadm = reader.ColumnIndex("HADM_ID");
    const int c_stay = reader.ColumnIndex("ICUSTAY_ID");
    const int c_in = reader.ColumnIndex("INTIME");
    const int c_out = reader.ColumnIndex("OUTTIME");
    const int c_los = reader.ColumnIndex("LOS");
    reader.ColumnIndex("SUBJECT_ID");
    std::set<std::int64_t> seen;
    while (reader.Next(row)) {
      ++stay_stage.input;
      const auto hadm = ParseId(row[c_hadm]);
      const auto stay_id = ParseId(row[c_stay]);
      const auto intime = ParseTimestamp(row[c_in]);
      std::optional<Timestamp> outtime;
      const bool out_ok = internal::Trim(row[c_out]).empty() ||
                          (outtime = ParseTimestamp(row[c_out])).has_value();
      std::optional<double> los;
      const bool los_ok = internal::Trim(row[c_los]).empty() ||
                          (los = internal::ParseDouble(row[c_los])).has_value();
      if (!hadm || !stay_id || !intime || !out_ok || !los_ok ||
          (los && *los < 0.0)) {
        report.AddRowError(RowContext(reader) + ": unparseable stay row");
        ++stay_stage.dropped["bad_row"];
        continue;
      }
      if (!seen.insert(*stay_id).second) {
        report.AddRowError(RowContext(reader) + ": duplicate ICUSTAY_ID");
        ++stay_stage.dropped["duplicate"];
        continue;
      }
      const auto it = admissions.find(*hadm);
      if (it == admissions.end()) {
        ++stay_stage.dropped["unknown_admission"];
        continue;
      }
      StayRecord stay;
      stay.stay_id = *stay_id;
      stay.intime = *intime;
      stay.outtime = outtime;
      stay.los_days = los;
      it->second.second.stays.push_back(std::move(stay));
    }
  }

  // DIAGNOSES
  {
    CsvReader reader(tables_dir / "DIAGNOSES.csv");
    const int c_hadm = reader.ColumnIndex("HADM_ID");
    const int c_code = reader.ColumnIndex("ICD9_CODE");
    reader.ColumnIndex("SUBJECT_ID");
    while (reader.Next(row)) {
      const auto hadm = ParseId(row[c_hadm]);
      if (!hadm) continue;
      const auto it = admissions.find(*hadm);
      if (it == admissions.end()) continue;
      it->second.second.diagnoses.emplace_back(internal::Trim(row[c_code]));
    }
  }

  // Exclusions: multi-stay admissions first, then underage stays.
  std::set<std::int64_t> excluded_admissions;
  std::set<std::int64_t> excluded_stays;
  for (const auto hadm : admission_order) {
    auto& [subject, admission] = admissions.at(hadm);
    const auto& patient = patients.at(subject);
    if (admission.stays.size() >= 2) {
      ++adm_stage.dropped["multiple_icu_stays"];
      stay_stage.dropped["multi_stay_admission"] +=
          static_cast<std::int64_t>(admission.stays.size());
      excluded_admissions.insert(hadm);
      for (const auto& stay : admission.stays) excluded_stays.insert(stay.stay_id);
      continue;
    }
    if (admission.stays.empty()) {
      ++adm_stage.dropped["no_icu_stay"];
      excluded_admissions.insert(hadm);
      continue;
    }
    auto& stay = admission.stays.front();
    double age = AgeInYears(patient.dob, stay.intime);
    if (age > kShiftedAgeThreshold) age = kShiftedAge;
    stay.age_years = age;
    if (age < kAdultAge) {
      ++stay_stage.dropped["underage"];
      ++adm_stage.dropped["underage"];
      excluded_admissions.insert(hadm);
      excluded_stays.insert(stay.stay_id);
      continue;
    }
    ++stay_stage.kept;
    ++adm_stage.kept;
    patients.at(subject).admissions.push_back(std::move(admission));
  }

  auto& patient_stage = report.stage("patients");
  std::set<std::int64_t> kept_patients;
  for (auto& [subject, patient] : patients) {
    if (patient.admissions.empty()) {
      ++patient_stage.dropped["no_eligible_stay"];
      continue;
    }
    ++patient_stage.kept;
    kept_patients.insert(subject);
  }

  // CHARTEVENTS
  std::unordered_map<std::int64_t, std::vector<ChartEvent>> events_by_patient;
  {
    CsvReader reader(tables_dir / "CHARTEVENTS.csv");
    const int c_subject = reader.ColumnIndex("SUBJECT_ID");
    const int c_hadm = reader.ColumnIndex("HADM_ID");
    const int c_stay = reader.ColumnIndex("ICUSTAY_ID");
    const int c_time = reader.ColumnIndex("CHARTTIME");
    const int c_item = reader.ColumnIndex("ITEMID");
    const int c_value = reader.ColumnIndex("VALUE");
    reader.ColumnIndex("VALUEUOM");
    auto& stage = report.stage("events.extract_subjects");
    while (reader.Next(row)) {
      ++stage.input;
      const auto subject = ParseId(row[c_subject]);
      const auto hadm = ParseId(row[c_hadm]);
      const auto item = ParseId(row[c_item]);
      std::optional<std::int64_t> stay;
      const bool stay_ok = internal::Trim(row[c_stay]).empty() ||
                           (stay = ParseId(row[c_stay])).has_value();
      if (!subject || !hadm || !item || !stay_ok) {
        report.AddRowError(RowContext(reader) + ": unparseable event row");
        ++stage.dropped["bad_row"];
        continue;
      }
      if (!patients.contains(*subject)) {
        ++stage.dropped["unknown_patient"];
        continue;
      }
      if (!kept_patients.contains(*subject) ||
          excluded_admissions.contains(*hadm) ||
          (stay && excluded_stays.contains(*stay))) {
        ++stage.dropped["excluded_stay"];
        continue;
      }
      ++stage.kept;
      ChartEvent event;
      event.subject_id = *subject;
      event.admission_id = *hadm;
      event.stay_id = stay;
      event.charttime = std::move(row[c_time]);
      event.item_id = *item;
      event.value = std::move(row[c_value]);
      events_by_patient[*subject].push_back(std::move(event));
    }
  }

  for (const auto subject : kept_patients) {
    auto& patient = patients.at(subject);
    auto it = events_by_patient.find(subject);
    if (it != events_by_patient.end()) patient.pending_events = std::move(it->second);
    std::sort(patient.admissions.begin(), patient.admissions.end(),
              [](const AdmissionRecord& a, const AdmissionRecord& b) {
                return a.admission_id < b.admission_id;
              });
    store.patients.push_back(std::move(patient));
  }
  return store;
}

void ValidateEvents(SubjectStore& store) {
  auto& stage = store.report.stage("events.validate");
  for (auto& patient : store.patients) {
    std::unordered_map<std::int64_t, AdmissionRecord*> by_admission;
    for (auto& admission : patient.admissions) {
      by_admission[admission.admission_id] = &admission;
    }
    for (auto& event : patient.pending_events) {
      ++stage.input;
      const auto it = by_admission.find(event.admission_id);
      if (it == by_admission.end()) {
        ++stage.dropped["orphan_admission"];
        continue;
      }
      AdmissionRecord& admission = *it->second;
      StayRecord* stay = nullptr;
      if (!event.stay_id) {
        if (admission.stays.size() != 1) {
          ++stage.dropped["unrecoverable_stay"];
          continue;
        }
        stay = &admission.stays.front();
        event.stay_id = stay->stay_id;
        ++stage.notes["recovered_stay_id"];
      } else {
        for (auto& candidate : admission.stays) {
          if (candidate.stay_id == *event.stay_id) stay = &candidate;
        }
        if (stay == nullptr) {
          ++stage.dropped["stay_mismatch"];
          continue;
        }
      }
      const auto time = ParseTimestamp(event.charttime);
      if (!time) {
        store.report.AddRowError("event of stay " + std::to_string(stay->stay_id) +
                                 ": bad CHARTTIME '" + event.charttime + "'");
        ++stage.dropped["bad_timestamp"];
        continue;
      }
      if (*time < stay->intime || (stay->outtime && *time > *stay->outtime)) {
        ++stage.dropped["out_of_window"];
        continue;
      }
      event.time = *time;
      ++stage.kept;
      stay->events.push_back(std::move(event));
    }
    patient.pending_events.clear();
    patient.pending_events.shrink_to_fit();
  }
}

void CanonicalizeEvents(std::vector<TimelineEvent>& events) {
  std::stable_sort(events.begin(), events.end(),
                   [](const TimelineEvent& a, const TimelineEvent& b) {
                     return a.hours < b.hours;
                   });
  std::vector<std::tuple<double, int, int, size_t>> keys;
  keys.reserve(events.size());
  size_t group_start = 0;
  std::map<int, int> seen;
  for (size_t i = 0; i < events.size(); ++i) {
    if (i > 0 && events[i].hours != events[group_start].hours) {
      group_start = i;
      seen.clear();
    }
    const int rank = seen[events[i].variable]++;
    keys.emplace_back(events[i].hours, rank, events[i].variable, i);
  }
  std::sort(keys.begin(), keys.end());
  std::vector<TimelineEvent> sorted;
  sorted.reserve(events.size());
  for (const auto& key : keys) sorted.push_back(events[std::get<3>(key)]);
  events = std::move(sorted);
}

std::vector<EpisodeTimeline> ExtractEpisodes(SubjectStore& store,
                                             const VariableTable& variables) {
  auto& stage = store.report.stage("events.extract_episodes");
  std::vector<EpisodeTimeline> episodes;
  for (auto& patient : store.patients) {
    for (auto& admission : patient.admissions) {
      for (auto& stay : admission.stays) {
        EpisodeTimeline episode;
        episode.stay_id = stay.stay_id;
        episode.patient_id = patient.subject_id;
        episode.admission_id = admission.admission_id;
        episode.intime = stay.intime;
        episode.outtime = stay.outtime;
        if (stay.los_days) {
          episode.los_hours = *stay.los_days * 24.0;
        } else if (stay.outtime) {
          episode.los_hours = HoursBetween(stay.intime, *stay.outtime);
        }
        episode.age_years = stay.age_years;

        // In-hospital death: DEATHTIME inside the admission, or a DOD date
        // between the admission and discharge dates.
        std::optional<Timestamp> death;
        if (admission.deathtime && *admission.deathtime >= admission.admittime &&
            *admission.deathtime <= admission.dischtime) {
          death = admission.deathtime;
        } else if (patient.dod && *patient.dod >= StartOfDay(admission.admittime) &&
                   *patient.dod <= StartOfDay(admission.dischtime)) {
          death = admission.deathtime ? admission.deathtime : patient.dod;
        }
        if (death) {
          episode.mortality_inhospital = true;
          episode.dod_hours = HoursBetween(stay.intime, *death);
        }
        episode.diagnoses = admission.diagnoses;

        for (auto& event : stay.events) {
          ++stage.input;
          const auto variable = variables.VariableForItem(event.item_id);
          if (!variable) {
            ++stage.dropped["unlisted_item"];
            continue;
          }
          const auto& spec = variables[*variable];
          double value = 0.0;
          if (spec.is_categorical()) {
            const auto category = spec.CategoryIndex(internal::Trim(event.value));
            if (!category) {
              ++stage.dropped["unknown_category"];
              continue;
            }
            value = *category;
          } else {
            const auto parsed = internal::ParseDouble(event.value);
            if (!parsed) {
              ++stage.dropped["unparseable_value"];
              continue;
            }
            if (*parsed < spec.valid_lo || *parsed > spec.valid_hi) {
              ++stage.dropped["outlier"];
              continue;
            }
            value = *parsed;
          }
          ++stage.kept;
          episode.events.push_back(
              {HoursBetween(stay.intime, event.time), *variable, value});
        }
        stay.events.clear();
        stay.events.shrink_to_fit();
        CanonicalizeEvents(episode.events);
        episodes.push_back(std::move(episode));
      }
    }
  }
  std::sort(episodes.begin(), episodes.end(),
            [](const EpisodeTimeline& a, const EpisodeTimeline& b) {
              return a.stay_id < b.stay_id;
            });
  auto& episode_stage = store.report.stage("episodes");
  episode_stage.input = static_cast<std::int64_t>(episodes.size());
  episode_stage.kept = episode_stage.input;
  for (const auto& episode : episodes) {
    if (episode.events.empty()) ++episode_stage.notes["empty_timeline"];
  }
  return episodes;
}

SplitManifest SplitTrainTest(std::span<const std::int64_t> patient_ids,
                             double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction < 1.0)) {
    throw DomainError("split fraction must lie in (0, 1)");
  }
  if (patient_ids.empty()) throw DomainError("cannot split an empty patient set");
  std::vector<std::int64_t> ids(patient_ids.begin(), patient_ids.end());
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  std::mt19937_64 rng(seed);
  // Fisher-Yates with an explicit index draw so the order does not depend on
  // the standard library's shuffle implementation.
  for (size_t i = ids.size(); i > 1; --i) {
    const size_t j = static_cast<size_t>(rng() % i);
    std::swap(ids[i - 1], ids[j]);
  }
  const auto n_test = static_cast<size_t>(
      std::llround(fraction * static_cast<double>(ids.size())));
  SplitManifest manifest;
  manifest.fraction = fraction;
  manifest.seed = seed;
  manifest.test_patients.insert(ids.begin(), ids.begin() + n_test);
  return manifest;
}

std::vector<std::int64_t> PatientIds(std::span<const EpisodeTimeline> episodes) {
  std::set<std::int64_t> ids;
  for (const auto& episode : episodes) ids.insert(episode.patient_id);
  return {ids.begin(), ids.end()};
}

bool IhmQualifies(const EpisodeTimeline& episode) {
  if (!episode.los_hours || *episode.los_hours < kIhmWindowHours) return false;
  return std::any_of(episode.events.begin(), episode.events.end(),
                     [](const TimelineEvent& e) { return e.hours < kIhmWindowHours; });
}

std::optional<std::pair<int, int>> HourlyGrid(const EpisodeTimeline& episode) {
  if (!episode.los_hours) return std::nullopt;
  double end = *episode.los_hours;
  if (episode.mortality_inhospital && episode.dod_hours) {
    end = std::min(end, *episode.dod_hours);
  }
  const int last = static_cast<int>(std::floor(end));
  if (last < kFirstPredictionHour) return std::nullopt;
  return std::pair{kFirstPredictionHour, last};
}

int DecompLabel(const EpisodeTimeline& episode, int hour) {
  if (!episode.mortality_inhospital || !episode.dod_hours) return 0;
  const double gap = *episode.dod_hours - hour;
  return gap >= 0.0 && gap <= kDecompHorizonHours ? 1 : 0;
}

std::vector<int> PhenotypeLabels(const EpisodeTimeline& episode,
                                 const PhenotypeMap& phenotypes,
                                 std::int64_t* unmapped) {
  std::vector<int> labels(kNumPhenotypes, 0);
  for (const auto& code : episode.diagnoses) {
    const auto label = phenotypes.LabelForCode(code);
    if (label) {
      labels[*label] = 1;
    } else if (unmapped != nullptr) {
      ++*unmapped;
    }
  }
  return labels;
}

std::optional<double> FullStayHours(const EpisodeTimeline& episode) {
  if (episode.los_hours) return *episode.los_hours;
  if (episode.events.empty()) return std::nullopt;
  return episode.events.back().hours;
}

namespace {

void Append(TaskSplit& split, const SplitManifest& manifest, TaskInstance instance) {
  (manifest.IsTest(instance.patient_id) ? split.test : split.train)
      .push_back(std::move(instance));
}

}  // namespace

TaskSplit BuildIhm(std::span<const EpisodeTimeline> episodes,
                   const SplitManifest& manifest, CohortReport* report) {
  CohortReport scratch;
  auto& stage = (report ? *report : scratch).stage("task.ihm");
  TaskSplit split;
  for (const auto& episode : episodes) {
    ++stage.input;
    if (!episode.los_hours) {
      ++stage.dropped["los_unknown"];
      continue;
    }
    if (*episode.los_hours < kIhmWindowHours) {
      ++stage.dropped["los_below_48h"];
      continue;
    }
    if (!IhmQualifies(episode)) {
      ++stage.dropped["no_events_in_48h"];
      continue;
    }
    ++stage.kept;
    TaskInstance instance;
    instance.stay_id = episode.stay_id;
    instance.patient_id = episode.patient_id;
    instance.task = Task::kIhm;
    instance.window_end_hours = kIhmWindowHours;
    instance.label = episode.mortality_inhospital ? 1 : 0;
    Append(split, manifest, std::move(instance));
  }
  return split;
}

TaskSplit BuildDecomp(std::span<const EpisodeTimeline> episodes,
                      const SplitManifest& manifest, CohortReport* report) {
  CohortReport scratch;
  auto& stage = (report ? *report : scratch).stage("task.decomp");
  TaskSplit split;
  for (const auto& episode : episodes) {
    ++stage.input;
    const auto grid = HourlyGrid(episode);
    if (!grid) {
      ++stage.dropped[episode.los_hours ? "too_short" : "los_unknown"];
      continue;
    }
    ++stage.kept;
    for (int hour = grid->first; hour <= grid->second; ++hour) {
      TaskInstance instance;
      instance.stay_id = episode.stay_id;
      instance.patient_id = episode.patient_id;
      instance.task = Task::kDecomp;
      instance.window_end_hours = hour;
      instance.label = DecompLabel(episode, hour);
      ++stage.notes[instance.label ? "positive_instances" : "negative_instances"];
      Append(split, manifest, std::move(instance));
    }
  }
  return split;
}

TaskSplit BuildLos(std::span<const EpisodeTimeline> episodes,
                   const SplitManifest& manifest, CohortReport* report) {
  CohortReport scratch;
  auto& stage = (report ? *report : scratch).stage("task.los");
  TaskSplit split;
  for (const auto& episode : episodes) {
    ++stage.input;
    const auto grid = HourlyGrid(episode);
    if (!grid) {
      ++stage.dropped[episode.los_hours ? "too_short" : "los_unknown"];
      continue;
    }
    ++stage.kept;
    for (int hour = grid->first; hour <= grid->second; ++hour) {
      TaskInstance instance;
      instance.stay_id = episode.stay_id;
      instance.patient_id = episode.patient_id;
      instance.task = Task::kLos;
      instance.window_end_hours = hour;
      instance.los_hours = std::max(0.0, *episode.los_hours - hour);
      instance.los_bucket = Bucketize(instance.los_hours / 24.0);
      Append(split, manifest, std::move(instance));
    }
  }
  return split;
}

TaskSplit BuildPheno(std::span<const EpisodeTimeline> episodes,
                     const SplitManifest& manifest,
                     const PhenotypeMap& phenotypes, CohortReport* report) {
  CohortReport scratch;
  auto& stage = (report ? *report : scratch).stage("task.pheno");
  TaskSplit split;
  std::int64_t unmapped = 0;
  for (const auto& episode : episodes) {
    ++stage.input;
    const auto hours = FullStayHours(episode);
    if (!hours || *hours <= 0.0) {
      ++stage.dropped["no_window"];
      continue;
    }
    ++stage.kept;
    TaskInstance instance;
    instance.stay_id = episode.stay_id;
    instance.patient_id = episode.patient_id;
    instance.task = Task::kPheno;
    instance.window_end_hours = *hours;
    instance.phenotypes = PhenotypeLabels(episode, phenotypes, &unmapped);
    Append(split, manifest, std::move(instance));
  }
  stage.notes["unmapped_codes"] += unmapped;
  return split;
}

MultitaskTargets BuildMultitaskTargets(const EpisodeTimeline& episode,
                                       const PhenotypeMap& phenotypes) {
  MultitaskTargets targets;
  const auto hours = FullStayHours(episode);
  if (!hours || *hours <= 0.0) return targets;
  const int steps = static_cast<int>(std::ceil(*hours));
  targets.steps = steps;
  targets.decomp_present.assign(steps, 0);
  targets.decomp.assign(steps, 0);
  targets.los_present.assign(steps, 0);
  targets.los_hours.assign(steps, 0.0);
  targets.los_bucket.assign(steps, 0);
  if (const auto grid = HourlyGrid(episode)) {
    for (int hour = grid->first; hour <= grid->second; ++hour) {
      const int t = hour - 1;
      targets.decomp_present[t] = 1;
      targets.decomp[t] = static_cast<std::uint8_t>(DecompLabel(episode, hour));
      targets.los_present[t] = 1;
      targets.los_hours[t] = std::max(0.0, *episode.los_hours - hour);
      targets.los_bucket[t] = Bucketize(targets.los_hours[t] / 24.0);
    }
  }
  targets.ihm_present = IhmQualifies(episode);
  targets.ihm = episode.mortality_inhospital ? 1 : 0;
  targets.pheno_present = true;
  targets.phenotypes = PhenotypeLabels(episode, phenotypes);
  return targets;
}

}  // namespace icubench
