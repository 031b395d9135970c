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

#ifndef ICUBENCH_SYNGEN_H_
#define ICUBENCH_SYNGEN_H_

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "icubench/core.h"
#include "icubench/phenotypes.h"

namespace icubench {

enum class SignalKind {
  // Dying patients run hotter (heart rate up, blood pressure down, GCS down)
  // for the whole stay, with an extra ramp over the last 24 hours before
  // death; LOS and phenotypes also shift selected vitals.
  kLinear,
  // Death is the XOR of two patient-level factors that shift heart rate and
  // systolic blood pressure. No per-variable statistic separates the classes,
  // so linear models on summary features stay near chance.
  kXor,
};

// Sampling model of one variable. Continuous values are
// mean + patient offset + planted shifts + N(0, sd), clamped to the valid
// range. Categorical variables pick the normal category with
// probability 0.8 and a uniform category otherwise.
struct VariableSampling {
  double mean = 0.0;
  double sd = 1.0;
  double patient_sd = 0.0;
  double events_per_hour = 1.0;
  // Charted once near admission instead of as a Poisson stream.
  bool once = false;
};

struct SynthConfig {
  std::uint64_t seed = 0;
  int n_patients = 200;
  // Admissions per patient are 1 + Geometric, capped at 4.
  double mean_admissions_per_patient = 1.2;
  double age_mean = 64.0;
  double age_sd = 17.0;
  // Log-normal ICU LOS in days.
  double los_log_mean = 1.0;
  double los_log_sd = 0.6;
  double mortality_rate = 0.13;
  // Fraction of in-hospital deaths that happen at ICU discharge; the rest die
  // on the ward within 72 hours of leaving the ICU.
  double death_in_icu_fraction = 0.75;
  std::array<double, kNumPhenotypes> phenotype_prevalence = {
      0.21, 0.075, 0.10, 0.33, 0.13, 0.13, 0.21, 0.07, 0.27,
      0.32, 0.09,  0.19, 0.29, 0.42, 0.27, 0.07, 0.13, 0.08,
      0.05, 0.04,  0.09, 0.14, 0.17, 0.14, 0.08};
  // One entry per variable in table order; empty means built-in defaults.
  std::vector<VariableSampling> sampling;
  // Multiplies every events_per_hour (cheap way to shrink large cohorts).
  double event_rate_scale = 1.0;

  // Anomalies, planted at these rates.
  double multi_stay_rate = 0.05;       // per admission
  double underage_rate = 0.03;         // per patient
  double elderly_shift_rate = 0.03;    // per patient, DOB shifted past 120y
  double missing_los_rate = 0.01;      // per eligible stay
  double orphan_event_rate = 0.002;    // per normal event
  double out_of_window_rate = 0.002;   // per normal event
  double missing_stay_id_rate = 0.005; // per normal event, recoverable
  double outlier_rate = 0.002;         // per continuous event
  double unknown_category_rate = 0.01; // per categorical event
  double unlisted_item_rate = 0.01;    // per normal event

  double signal_strength = 0.0;  // in [0, 1]
  SignalKind signal_kind = SignalKind::kLinear;

  // Throws DomainError on out-of-range rates or sizes.
  void Validate(const VariableTable& variables) const;
};

// Ground truth of what the generator wrote, used to check pipeline counts.
struct GenerationReport {
  std::int64_t patients = 0;
  std::int64_t admissions = 0;
  std::int64_t stays = 0;
  std::int64_t events = 0;  // CHARTEVENTS rows
  std::int64_t diagnoses = 0;

  std::int64_t multi_stay_admissions = 0;
  std::int64_t multi_stay_stays = 0;
  std::int64_t underage_patients = 0;
  std::int64_t underage_stays = 0;
  std::int64_t elderly_shifted_patients = 0;
  std::int64_t excluded_stay_events = 0;  // events of excluded stays
  std::int64_t eligible_stays = 0;
  std::int64_t missing_los_stays = 0;
  std::int64_t in_hospital_deaths = 0;  // among eligible stays

  std::int64_t orphan_events = 0;
  std::int64_t out_of_window_events = 0;
  std::int64_t recoverable_missing_stay_events = 0;
  std::int64_t outlier_events = 0;
  std::int64_t unknown_category_events = 0;
  std::int64_t unlisted_item_events = 0;

  bool operator==(const GenerationReport&) const = default;
};

inline constexpr std::int64_t kUnlistedItemId = 999999;

// Item id a synthetic event of `variable` is charted under.
std::int64_t SyntheticItemId(const VariableSpec& variable);

std::vector<VariableSampling> DefaultSampling(const VariableTable& variables);

// Writes PATIENTS.csv, ADMISSIONS.csv, ICUSTAYS.csv, CHARTEVENTS.csv,
// DIAGNOSES.csv and generation_report.txt into `out_dir`. Each patient draws
// from its own random stream derived from (seed, patient index), so any
// `jobs` value produces the same bytes.
GenerationReport Generate(const SynthConfig& config,
                          const VariableTable& variables,
                          const PhenotypeMap& phenotypes,
                          const std::filesystem::path& out_dir, int jobs = 1);

// Same as Generate with `signal_strength` replaced by `strength`.
GenerationReport PlantSignal(SynthConfig config, double strength,
                             const VariableTable& variables,
                             const PhenotypeMap& phenotypes,
                             const std::filesystem::path& out_dir,
                             int jobs = 1);

std::string FormatGenerationReport(const GenerationReport& report);
GenerationReport ReadGenerationReport(const std::filesystem::path& path);

}  // namespace icubench

#endif  // ICUBENCH_SYNGEN_H_
