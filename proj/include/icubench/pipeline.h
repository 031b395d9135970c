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

#ifndef ICUBENCH_PIPELINE_H_
#define ICUBENCH_PIPELINE_H_

#include <cstdint>
#include <deque>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "icubench/core.h"
#include "icubench/phenotypes.h"

namespace icubench {

// Row accounting for every pipeline stage. For each stage
// input == kept + sum(dropped).
class CohortReport {
 public:
  struct Stage {
    std::string name;
    std::int64_t input = 0;
    std::int64_t kept = 0;
    std::map<std::string, std::int64_t> dropped;
    // Informational counters that are not drops (e.g. recovered stay ids).
    std::map<std::string, std::int64_t> notes;

    std::int64_t Dropped(const std::string& reason) const;
    std::int64_t TotalDropped() const;
    bool Reconciles() const { return input == kept + TotalDropped(); }
  };

  Stage& stage(const std::string& name);
  const Stage* Find(const std::string& name) const;
  const std::deque<Stage>& stages() const { return stages_; }

  void AddRowError(std::string message);
  const std::vector<std::string>& row_errors() const { return row_errors_; }
  std::int64_t row_error_count() const { return row_error_count_; }

  bool Reconciles() const;
  // Structured "stage.key: value" text summary.
  std::string Format() const;

 private:
  std::deque<Stage> stages_;
  std::vector<std::string> row_errors_;
  std::int64_t row_error_count_ = 0;
};

struct ChartEvent {
  std::int64_t subject_id = 0;
  std::int64_t admission_id = 0;
  std::optional<std::int64_t> stay_id;
  Timestamp time = 0;  // valid after validation
  std::string charttime;
  std::int64_t item_id = 0;
  std::string value;
};

struct StayRecord {
  std::int64_t stay_id = 0;
  Timestamp intime = 0;
  std::optional<Timestamp> outtime;
  std::optional<double> los_days;
  double age_years = 0.0;
  std::vector<ChartEvent> events;  // filled by ValidateEvents
};

struct AdmissionRecord {
  std::int64_t admission_id = 0;
  Timestamp admittime = 0;
  Timestamp dischtime = 0;
  std::optional<Timestamp> deathtime;
  std::vector<StayRecord> stays;
  std::vector<std::string> diagnoses;
};

struct PatientRecord {
  std::int64_t subject_id = 0;
  std::string gender;
  Timestamp dob = 0;
  std::optional<Timestamp> dod;
  std::vector<AdmissionRecord> admissions;
  std::vector<ChartEvent> pending_events;  // cleared by ValidateEvents
};

// Per-patient root cohort, ordered by subject id.
struct SubjectStore {
  std::vector<PatientRecord> patients;
  CohortReport report;
};

// Reads PATIENTS, ADMISSIONS, ICUSTAYS, DIAGNOSES and CHARTEVENTS, excludes
// admissions with more than one ICU stay and stays of patients younger than
// 18, and groups the rest by patient. Ages above 120 (shifted DOBs) count as
// 90. Missing columns throw SchemaError.
SubjectStore ExtractSubjects(const std::filesystem::path& tables_dir);

// Attaches each event to its ICU stay. Events with an empty stay id are
// recovered when their admission has exactly one stay; unmatched events and
// events outside [intime, outtime] are dropped.
void ValidateEvents(SubjectStore& store);

// Builds one timeline per stay: maps item ids to variables, parses values,
// drops outliers and unknown categories, and re-times events to hours since
// intime.
// Orders events by time, then by occurrence among same-variable events at
// that time, then by variable. This is the order episode files round-trip to.
void CanonicalizeEvents(std::vector<TimelineEvent>& events);

std::vector<EpisodeTimeline> ExtractEpisodes(SubjectStore& store,
                                             const VariableTable& variables);

struct SplitManifest {
  std::set<std::int64_t> test_patients;
  double fraction = 0.15;
  std::uint64_t seed = 0;

  bool IsTest(std::int64_t patient_id) const {
    return test_patients.contains(patient_id);
  }
};

// Patient-level split with exactly round(fraction * N) test patients.
SplitManifest SplitTrainTest(std::span<const std::int64_t> patient_ids,
                             double fraction, std::uint64_t seed);
std::vector<std::int64_t> PatientIds(std::span<const EpisodeTimeline> episodes);

struct TaskSplit {
  std::vector<TaskInstance> train;
  std::vector<TaskInstance> test;
};

inline constexpr double kIhmWindowHours = 48.0;
inline constexpr int kFirstPredictionHour = 4;
inline constexpr double kDecompHorizonHours = 24.0;

// Task eligibility rules, shared by the task builders and multitask targets.
bool IhmQualifies(const EpisodeTimeline& episode);
// Inclusive hour grid [4, last] for decompensation and LOS instances, or
// nullopt when LOS is unknown or shorter than 4 hours.
std::optional<std::pair<int, int>> HourlyGrid(const EpisodeTimeline& episode);
int DecompLabel(const EpisodeTimeline& episode, int hour);
std::vector<int> PhenotypeLabels(const EpisodeTimeline& episode,
                                 const PhenotypeMap& phenotypes,
                                 std::int64_t* unmapped = nullptr);
// Duration of the phenotyping window: LOS when known, else last event time.
std::optional<double> FullStayHours(const EpisodeTimeline& episode);

TaskSplit BuildIhm(std::span<const EpisodeTimeline> episodes,
                   const SplitManifest& manifest, CohortReport* report = nullptr);
TaskSplit BuildDecomp(std::span<const EpisodeTimeline> episodes,
                      const SplitManifest& manifest,
                      CohortReport* report = nullptr);
TaskSplit BuildLos(std::span<const EpisodeTimeline> episodes,
                   const SplitManifest& manifest, CohortReport* report = nullptr);
TaskSplit BuildPheno(std::span<const EpisodeTimeline> episodes,
                     const SplitManifest& manifest,
                     const PhenotypeMap& phenotypes,
                     CohortReport* report = nullptr);

// Grouped targets of one stay over steps 1..ceil(full stay hours).
MultitaskTargets BuildMultitaskTargets(const EpisodeTimeline& episode,
                                       const PhenotypeMap& phenotypes);

}  // namespace icubench

#endif  // ICUBENCH_PIPELINE_H_
