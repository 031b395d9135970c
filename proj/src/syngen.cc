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

#include "icubench/syngen.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <random>
#include <sstream>

#include "block_config.h"
#include "icubench/csv.h"
#include "icubench/error.h"
#include "icubench/timeutil.h"
#include "parallel.h"

namespace icubench {
namespace {

constexpr double kSecondsPerYear = 365.2425 * 86400.0;
constexpr int kMaxAdmissions = 4;
constexpr std::int64_t kOrphanAdmissionBase = 900000000;

using internal::SplitMix64;

// Codes that are deliberately absent from the phenotype map.
constexpr const char* kUnmappedCodes[] = {"V4581", "E8788", "V1582", "2859",
                                          "3051",  "V5861", "78791", "V1046"};

struct VariableRoles {
  int heart_rate = -1;
  int systolic = -1;
  int diastolic = -1;
  int mean_bp = -1;
  int resp_rate = -1;
  int spo2 = -1;
  std::vector<int> continuous;  // in table order
};

struct Context {
  const SynthConfig& config;
  const VariableTable& variables;
  const PhenotypeMap& phenotypes;
  std::vector<VariableSampling> sampling;
  VariableRoles roles;
  std::vector<int> abnormal_category;  // per categorical variable
  std::vector<std::string> unmapped_codes;
};

// Latent state of one ICU stay that drives planted signal.
struct StayState {
  double los_hours = 0.0;
  bool died = false;
  double death_hours = 0.0;  // since intime, valid if died
  int xor_a = 0;
  int xor_b = 0;
  std::vector<int> phenotype_bits;
};

struct PatientOutput {
  std::string patients;
  std::string admissions;
  std::string icustays;
  std::string chartevents;
  std::string diagnoses;
  GenerationReport counts;
};

class PatientGenerator {
 public:
  PatientGenerator(const Context& ctx, int index)
      : ctx_(ctx),
        cfg_(ctx.config),
        rng_(SplitMix64(ctx.config.seed ^ SplitMix64(
                                               static_cast<std::uint64_t>(index)))),
        subject_id_(10000 + static_cast<std::int64_t>(index)) {}

  PatientOutput Run();

 private:
  double Uniform(double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(rng_);
  }
  bool Bernoulli(double p) {
    if (p <= 0.0) return false;
    return Uniform(0.0, 1.0) < p;
  }
  double Normal(double mean, double sd) {
    if (sd <= 0.0) return mean;
    return std::normal_distribution<double>(mean, sd)(rng_);
  }

  double ContinuousShift(int variable, double hours, const StayState& stay) const;
  double AbnormalProbability(double hours, const StayState& stay) const;
  void EmitStay(std::int64_t hadm_id, std::int64_t stay_id, Timestamp intime,
                const StayState& stay, bool eligible, bool has_outtime);
  void EmitEvent(std::int64_t hadm_id, const std::string& stay_field,
                 Timestamp time, std::int64_t item, const std::string& value,
                 const std::string& unit);

  const Context& ctx_;
  const SynthConfig& cfg_;
  std::mt19937_64 rng_;
  std::int64_t subject_id_;
  std::vector<double> patient_offsets_;
  PatientOutput out_;
};

double PatientGenerator::ContinuousShift(int variable, double hours,
                                         const StayState& stay) const {
  const double s = cfg_.signal_strength;
  if (s == 0.0) return 0.0;
  const auto& roles = ctx_.roles;
  double shift = 0.0;
  if (cfg_.signal_kind == SignalKind::kXor) {
    if (variable == roles.heart_rate) shift += 18.0 * s * (2 * stay.xor_a - 1);
    if (variable == roles.systolic) shift += 22.0 * s * (2 * stay.xor_b - 1);
    return shift;
  }
  if (stay.died) {
    if (variable == roles.heart_rate) shift += 25.0 * s;
    if (variable == roles.systolic) shift -= 15.0 * s;
    if (variable == roles.mean_bp) shift -= 10.0 * s;
    if (variable == roles.diastolic) shift -= 8.0 * s;
    // Ramp over the 24 hours before death.
    const double gap = stay.death_hours - hours;
    if (gap >= 0.0 && gap <= 24.0) {
      const double ramp = 1.0 - gap / 24.0;
      if (variable == roles.heart_rate) shift += 30.0 * s * ramp;
      if (variable == roles.spo2) shift -= 6.0 * s * ramp;
      if (variable == roles.resp_rate) shift += 8.0 * s * ramp;
    }
  }
  if (variable == roles.resp_rate) {
    shift += 4.0 * s * (std::log(stay.los_hours / 24.0) - 1.0);
  }
  for (int k = 0; k < kNumPhenotypes; ++k) {
    if (!stay.phenotype_bits[k] || roles.continuous.empty()) continue;
    if (roles.continuous[k % roles.continuous.size()] == variable) {
      shift += s * 0.8 * ctx_.sampling[variable].sd * (k < 12 ? 1.0 : -1.0);
    }
  }
  return shift;
}

double PatientGenerator::AbnormalProbability(double hours,
                                             const StayState& stay) const {
  const double s = cfg_.signal_strength;
  if (s == 0.0 || cfg_.signal_kind != SignalKind::kLinear || !stay.died) {
    return 0.0;
  }
  double p = 0.5 * s;
  const double gap = stay.death_hours - hours;
  if (gap >= 0.0 && gap <= 24.0) p += 0.4 * s * (1.0 - gap / 24.0);
  return std::min(p, 0.95);
}

void PatientGenerator::EmitEvent(std::int64_t hadm_id,
                                 const std::string& stay_field, Timestamp time,
                                 std::int64_t item, const std::string& value,
                                 const std::string& unit) {
  auto& out = out_.chartevents;
  out += std::to_string(subject_id_);
  out += ',';
  out += std::to_string(hadm_id);
  out += ',';
  out += stay_field;
  out += ',';
  out += FormatTimestamp(time);
  out += ',';
  out += std::to_string(item);
  out += ',';
  out += CsvEscape(value);
  out += ',';
  out += CsvEscape(unit);
  out += '\n';
  ++out_.counts.events;
}

void PatientGenerator::EmitStay(std::int64_t hadm_id, std::int64_t stay_id,
                                Timestamp intime, const StayState& stay,
                                bool eligible, bool has_outtime) {
  const auto& variables = ctx_.variables;
  const std::string stay_field = std::to_string(stay_id);
  auto& counts = out_.counts;
  const auto to_time = [&](double hours) {
    const auto seconds = static_cast<std::int64_t>(std::floor(hours * 60.0)) * 60;
    return intime + seconds;
  };

  for (int v = 0; v < variables.size(); ++v) {
    const auto& spec = variables[v];
    const auto& sampling = ctx_.sampling[v];
    std::vector<double> times;
    if (sampling.once) {
      times.push_back(Uniform(0.0, std::min(2.0, stay.los_hours)));
    } else {
      const double rate =
          sampling.events_per_hour * cfg_.event_rate_scale * stay.los_hours;
      const int n = rate > 0.0 ? std::poisson_distribution<int>(rate)(rng_) : 0;
      for (int i = 0; i < n; ++i) times.push_back(Uniform(0.0, stay.los_hours));
      std::sort(times.begin(), times.end());
    }
    const std::int64_t item = SyntheticItemId(spec);
    for (const double hours : times) {
      std::string value;
      if (spec.is_categorical()) {
        int category = spec.NormalCategory();
        if (Bernoulli(AbnormalProbability(hours, stay))) {
          category = ctx_.abnormal_category[v];
        } else if (!Bernoulli(0.8)) {
          category = std::uniform_int_distribution<int>(
              0, static_cast<int>(spec.categories.size()) - 1)(rng_);
        }
        value = spec.categories[category];
      } else {
        double x = sampling.mean + patient_offsets_[v] +
                   ContinuousShift(v, hours, stay) + Normal(0.0, sampling.sd);
        x = std::clamp(x, spec.valid_lo, spec.valid_hi);
        x = std::round(x * 100.0) / 100.0;
        x = std::clamp(x, spec.valid_lo, spec.valid_hi);
        value = FormatDouble(x);
      }
      const Timestamp time = to_time(hours);

      if (!eligible) {
        EmitEvent(hadm_id, stay_field, time, item, value, spec.unit);
        ++counts.excluded_stay_events;
        continue;
      }
      // At most one in-place anomaly per event.
      const double u = Uniform(0.0, 1.0);
      std::string field = stay_field;
      if (u < cfg_.missing_stay_id_rate) {
        field.clear();
        ++counts.recoverable_missing_stay_events;
      } else if (u < cfg_.missing_stay_id_rate + cfg_.outlier_rate &&
                 !spec.is_categorical()) {
        const double span = spec.valid_hi - spec.valid_lo;
        value = FormatDouble(spec.valid_hi + 0.5 * span + 1.0);
        ++counts.outlier_events;
      } else if (u < cfg_.missing_stay_id_rate + cfg_.unknown_category_rate &&
                 spec.is_categorical()) {
        value = "garbage";
        ++counts.unknown_category_events;
      }
      EmitEvent(hadm_id, field, time, item, value, spec.unit);

      if (Bernoulli(cfg_.orphan_event_rate)) {
        EmitEvent(kOrphanAdmissionBase + subject_id_, "", time, item, value,
                  spec.unit);
        ++counts.orphan_events;
      }
      if (Bernoulli(cfg_.out_of_window_rate)) {
        const double shift = Uniform(0.5, 12.0);
        const bool after = has_outtime && Bernoulli(0.5);
        const double at = after ? stay.los_hours + shift : -shift;
        EmitEvent(hadm_id, stay_field, to_time(at), item, value, spec.unit);
        ++counts.out_of_window_events;
      }
      if (Bernoulli(cfg_.unlisted_item_rate)) {
        EmitEvent(hadm_id, stay_field, time, kUnlistedItemId, "1", "");
        ++counts.unlisted_item_events;
      }
    }
  }
}

PatientOutput PatientGenerator::Run() {
  auto& counts = out_.counts;
  const auto& variables = ctx_.variables;
  counts.patients = 1;

  patient_offsets_.assign(variables.size(), 0.0);
  for (int v = 0; v < variables.size(); ++v) {
    patient_offsets_[v] = Normal(0.0, ctx_.sampling[v].patient_sd);
  }

  const bool underage = Bernoulli(cfg_.underage_rate);
  const bool elderly = !underage && Bernoulli(cfg_.elderly_shift_rate);
  counts.underage_patients = underage ? 1 : 0;
  counts.elderly_shifted_patients = elderly ? 1 : 0;
  const std::string gender = Bernoulli(0.55) ? "M" : "F";

  int n_admissions = 1;
  const double more = 1.0 - 1.0 / std::max(1.0, cfg_.mean_admissions_per_patient);
  while (n_admissions < kMaxAdmissions && Bernoulli(more)) ++n_admissions;

  const Timestamp epoch_lo = MakeTimestamp(2100, 1, 1);
  const Timestamp epoch_hi = MakeTimestamp(2180, 1, 1);
  Timestamp cursor = epoch_lo + static_cast<Timestamp>(Uniform(
                                    0.0, static_cast<double>(epoch_hi - epoch_lo)));
  cursor = StartOfDay(cursor) + 60 * static_cast<Timestamp>(Uniform(0.0, 1440.0));

  double age = 0.0;
  if (underage) {
    age = Uniform(1.0, 15.0);
  } else if (elderly) {
    age = Uniform(300.0, 310.0);
  } else {
    age = std::clamp(Normal(cfg_.age_mean, cfg_.age_sd), 18.5, 89.0);
  }
  const Timestamp dob =
      StartOfDay(cursor - static_cast<Timestamp>(age * kSecondsPerYear));

  std::optional<Timestamp> dod;
  Timestamp last_discharge = cursor;
  for (int a = 0; a < n_admissions; ++a) {
    const std::int64_t hadm_id = 100000 + subject_id_ * 10 + a;
    const bool multi = !underage && Bernoulli(cfg_.multi_stay_rate);
    const bool eligible = !multi && !underage;
    const int n_stays = multi ? 2 : 1;
    const bool died = Bernoulli(cfg_.mortality_rate);
    const Timestamp admittime = cursor;

    std::vector<int> phenotype_bits(kNumPhenotypes, 0);
    for (int k = 0; k < kNumPhenotypes; ++k) {
      phenotype_bits[k] = Bernoulli(cfg_.phenotype_prevalence[k]) ? 1 : 0;
    }
    int xor_a = 0, xor_b = 0;
    if (Bernoulli(0.5)) {
      xor_a = 1;
      xor_b = died ? 0 : 1;
    } else {
      xor_a = 0;
      xor_b = died ? 1 : 0;
    }

    Timestamp stay_start = admittime + 60 * static_cast<Timestamp>(Uniform(0.0, 1440.0));
    Timestamp outtime = stay_start;
    std::optional<Timestamp> deathtime;
    for (int s = 0; s < n_stays; ++s) {
      const std::int64_t stay_id = 200000 + subject_id_ * 10 + a * 2 + s;
      StayState stay;
      const double los_days =
          std::clamp(std::exp(Normal(cfg_.los_log_mean, cfg_.los_log_sd)), 0.1, 60.0);
      const Timestamp intime = stay_start;
      outtime = intime + 60 * static_cast<Timestamp>(std::llround(los_days * 1440.0));
      stay.los_hours = HoursBetween(intime, outtime);
      stay.phenotype_bits = phenotype_bits;
      stay.xor_a = xor_a;
      stay.xor_b = xor_b;
      const bool last = s == n_stays - 1;
      if (last && died) {
        stay.died = true;
        if (Bernoulli(cfg_.death_in_icu_fraction)) {
          deathtime = outtime;
        } else {
          deathtime = outtime + 60 * static_cast<Timestamp>(Uniform(60.0, 72.0 * 60.0));
        }
        stay.death_hours = HoursBetween(intime, *deathtime);
      }
      const bool has_outtime = !(eligible && Bernoulli(cfg_.missing_los_rate));

      ++counts.stays;
      if (multi) ++counts.multi_stay_stays;
      if (underage) ++counts.underage_stays;
      if (eligible) {
        ++counts.eligible_stays;
        if (!has_outtime) ++counts.missing_los_stays;
        if (stay.died) ++counts.in_hospital_deaths;
      }

      out_.icustays += std::to_string(subject_id_) + "," + std::to_string(hadm_id) +
                       "," + std::to_string(stay_id) + "," + FormatTimestamp(intime) +
                       "," + (has_outtime ? FormatTimestamp(outtime) : "") + "," +
                       (has_outtime ? FormatDouble(static_cast<double>(outtime - intime) /
                                                   86400.0)
                                    : "") +
                       "\n";
      EmitStay(hadm_id, stay_id, intime, stay, eligible, has_outtime);
      stay_start = outtime + 60 * static_cast<Timestamp>(Uniform(120.0, 2880.0));
    }
    Timestamp dischtime = deathtime ? *deathtime
                                    : outtime + 60 * static_cast<Timestamp>(
                                                         Uniform(720.0, 7200.0));
    out_.admissions += std::to_string(subject_id_) + "," + std::to_string(hadm_id) +
                       "," + FormatTimestamp(admittime) + "," +
                       FormatTimestamp(dischtime) + "," +
                       (deathtime ? FormatTimestamp(*deathtime) : "") + "\n";
    ++counts.admissions;
    if (multi) ++counts.multi_stay_admissions;

    for (int k = 0; k < kNumPhenotypes; ++k) {
      if (!phenotype_bits[k]) continue;
      const auto& codes = ctx_.phenotypes[k].codes;
      const auto& code = codes[std::uniform_int_distribution<size_t>(
          0, codes.size() - 1)(rng_)];
      out_.diagnoses += std::to_string(subject_id_) + "," +
                        std::to_string(hadm_id) + "," + code + "\n";
      ++counts.diagnoses;
    }
    const int extra = std::uniform_int_distribution<int>(1, 3)(rng_);
    for (int i = 0; i < extra && !ctx_.unmapped_codes.empty(); ++i) {
      const auto& code = ctx_.unmapped_codes[std::uniform_int_distribution<size_t>(
          0, ctx_.unmapped_codes.size() - 1)(rng_)];
      out_.diagnoses += std::to_string(subject_id_) + "," +
                        std::to_string(hadm_id) + "," + code + "\n";
      ++counts.diagnoses;
    }

    last_discharge = dischtime;
    if (deathtime) {
      dod = StartOfDay(*deathtime);
      break;
    }
    cursor = dischtime + 60 * static_cast<Timestamp>(Uniform(30.0 * 1440.0, 300.0 * 1440.0));
  }
  if (!dod && Bernoulli(0.1)) {
    dod = StartOfDay(last_discharge +
                     86400 * static_cast<Timestamp>(Uniform(30.0, 800.0)));
  }
  out_.patients = std::to_string(subject_id_) + "," + gender + "," +
                  FormatTimestamp(dob) + "," + (dod ? FormatTimestamp(*dod) : "") +
                  "\n";
  return std::move(out_);
}

void Accumulate(GenerationReport& total, const GenerationReport& part) {
  total.patients += part.patients;
  total.admissions += part.admissions;
  total.stays += part.stays;
  total.events += part.events;
  total.diagnoses += part.diagnoses;
  total.multi_stay_admissions += part.multi_stay_admissions;
  total.multi_stay_stays += part.multi_stay_stays;
  total.underage_patients += part.underage_patients;
  total.underage_stays += part.underage_stays;
  total.elderly_shifted_patients += part.elderly_shifted_patients;
  total.excluded_stay_events += part.excluded_stay_events;
  total.eligible_stays += part.eligible_stays;
  total.missing_los_stays += part.missing_los_stays;
  total.in_hospital_deaths += part.in_hospital_deaths;
  total.orphan_events += part.orphan_events;
  total.out_of_window_events += part.out_of_window_events;
  total.recoverable_missing_stay_events += part.recoverable_missing_stay_events;
  total.outlier_events += part.outlier_events;
  total.unknown_category_events += part.unknown_category_events;
  total.unlisted_item_events += part.unlisted_item_events;
}

std::vector<std::pair<std::string, std::int64_t GenerationReport::*>>
ReportFields() {
  return {
      {"patients", &GenerationReport::patients},
      {"admissions", &GenerationReport::admissions},
      {"stays", &GenerationReport::stays},
      {"events", &GenerationReport::events},
      {"diagnoses", &GenerationReport::diagnoses},
      {"multi_stay_admissions", &GenerationReport::multi_stay_admissions},
      {"multi_stay_stays", &GenerationReport::multi_stay_stays},
      {"underage_patients", &GenerationReport::underage_patients},
      {"underage_stays", &GenerationReport::underage_stays},
      {"elderly_shifted_patients", &GenerationReport::elderly_shifted_patients},
      {"excluded_stay_events", &GenerationReport::excluded_stay_events},
      {"eligible_stays", &GenerationReport::eligible_stays},
      {"missing_los_stays", &GenerationReport::missing_los_stays},
      {"in_hospital_deaths", &GenerationReport::in_hospital_deaths},
      {"orphan_events", &GenerationReport::orphan_events},
      {"out_of_window_events", &GenerationReport::out_of_window_events},
      {"recoverable_missing_stay_events",
       &GenerationReport::recoverable_missing_stay_events},
      {"outlier_events", &GenerationReport::outlier_events},
      {"unknown_category_events", &GenerationReport::unknown_category_events},
      {"unlisted_item_events", &GenerationReport::unlisted_item_events},
  };
}

void CheckRate(double value, const char* name) {
  if (!(value >= 0.0 && value <= 1.0)) {
    throw DomainError(std::string(name) + " must lie in [0, 1]");
  }
}

}  // namespace

std::int64_t SyntheticItemId(const VariableSpec& variable) {
  if (variable.item_ids.empty()) return 900000 + variable.id;
  return variable.item_ids.back();
}

std::vector<VariableSampling> DefaultSampling(const VariableTable& variables) {
  static const std::map<std::string, VariableSampling> kKnown = {
      {"Diastolic blood pressure", {60.0, 10.0, 7.0, 1.0}},
      {"Fraction inspired oxygen", {0.4, 0.08, 0.06, 0.15}},
      {"Glucose", {135.0, 30.0, 20.0, 0.25}},
      {"Heart Rate", {86.0, 10.0, 8.0, 1.0}},
      {"Height", {170.0, 0.0, 10.0, 0.0, true}},
      {"Mean blood pressure", {78.0, 9.0, 7.0, 1.0}},
      {"Oxygen saturation", {96.5, 1.5, 1.0, 1.0}},
      {"Respiratory rate", {19.0, 3.0, 2.5, 1.0}},
      {"Systolic blood pressure", {120.0, 14.0, 10.0, 1.0}},
      {"Temperature", {36.9, 0.4, 0.3, 0.25}},
      {"Weight", {81.0, 0.0, 15.0, 0.0, true}},
      {"pH", {7.4, 0.04, 0.03, 0.15}},
      {"Capillary refill rate", {0.0, 0.0, 0.0, 0.1}},
  };
  std::vector<VariableSampling> out;
  for (const auto& spec : variables.specs()) {
    const auto it = kKnown.find(spec.name);
    if (it != kKnown.end()) {
      out.push_back(it->second);
    } else if (spec.is_categorical()) {
      out.push_back({0.0, 0.0, 0.0, 0.25});
    } else {
      const double span = spec.valid_hi - spec.valid_lo;
      out.push_back({spec.NormalNumeric(), span / 50.0, span / 100.0, 0.5});
    }
  }
  return out;
}

void SynthConfig::Validate(const VariableTable& variables) const {
  if (n_patients <= 0) throw DomainError("n_patients must be positive");
  if (!(mean_admissions_per_patient >= 1.0)) {
    throw DomainError("mean_admissions_per_patient must be >= 1");
  }
  if (!(los_log_sd >= 0.0) || !(age_sd >= 0.0)) {
    throw DomainError("standard deviations must be >= 0");
  }
  if (!(event_rate_scale > 0.0)) throw DomainError("event_rate_scale must be > 0");
  CheckRate(mortality_rate, "mortality_rate");
  CheckRate(death_in_icu_fraction, "death_in_icu_fraction");
  for (const double p : phenotype_prevalence) CheckRate(p, "phenotype prevalence");
  CheckRate(multi_stay_rate, "multi_stay_rate");
  CheckRate(underage_rate, "underage_rate");
  CheckRate(elderly_shift_rate, "elderly_shift_rate");
  CheckRate(missing_los_rate, "missing_los_rate");
  CheckRate(orphan_event_rate, "orphan_event_rate");
  CheckRate(out_of_window_rate, "out_of_window_rate");
  CheckRate(outlier_rate, "outlier_rate");
  CheckRate(unknown_category_rate, "unknown_category_rate");
  CheckRate(unlisted_item_rate, "unlisted_item_rate");
  CheckRate(missing_stay_id_rate, "missing_stay_id_rate");
  if (missing_stay_id_rate + std::max(outlier_rate, unknown_category_rate) > 1.0) {
    throw DomainError("in-place anomaly rates sum above 1");
  }
  CheckRate(signal_strength, "signal_strength");
  if (!sampling.empty()) {
    if (static_cast<int>(sampling.size()) != variables.size()) {
      throw DomainError("sampling must list one entry per variable");
    }
    for (const auto& s : sampling) {
      if (!(s.events_per_hour > 0.0) && !s.once) {
        throw DomainError("event rates must be > 0");
      }
      if (!(s.sd >= 0.0) || !(s.patient_sd >= 0.0)) {
        throw DomainError("sampling standard deviations must be >= 0");
      }
    }
  }
}

GenerationReport Generate(const SynthConfig& config,
                          const VariableTable& variables,
                          const PhenotypeMap& phenotypes,
                          const std::filesystem::path& out_dir, int jobs) {
  config.Validate(variables);
  Context ctx{config, variables, phenotypes,
              config.sampling.empty() ? DefaultSampling(variables) : config.sampling,
              {}, {}, {}};
  auto& roles = ctx.roles;
  const auto find = [&](const char* name) {
    const auto index = variables.FindByName(name);
    return index ? *index : -1;
  };
  roles.heart_rate = find("Heart Rate");
  roles.systolic = find("Systolic blood pressure");
  roles.diastolic = find("Diastolic blood pressure");
  roles.mean_bp = find("Mean blood pressure");
  roles.resp_rate = find("Respiratory rate");
  roles.spo2 = find("Oxygen saturation");
  ctx.abnormal_category.assign(variables.size(), 0);
  for (int v = 0; v < variables.size(); ++v) {
    const auto& spec = variables[v];
    if (!spec.is_categorical()) {
      roles.continuous.push_back(v);
      continue;
    }
    // The category whose score lies farthest from the normal score.
    const double normal = spec.category_scores[spec.NormalCategory()];
    int best = 0;
    for (int c = 1; c < static_cast<int>(spec.categories.size()); ++c) {
      if (std::abs(spec.category_scores[c] - normal) >
          std::abs(spec.category_scores[best] - normal)) {
        best = c;
      }
    }
    ctx.abnormal_category[v] = best;
  }
  for (const char* code : kUnmappedCodes) {
    if (!phenotypes.LabelForCode(code)) ctx.unmapped_codes.emplace_back(code);
  }

  std::filesystem::create_directories(out_dir);
  std::ofstream patients(out_dir / "PATIENTS.csv", std::ios::binary);
  std::ofstream admissions(out_dir / "ADMISSIONS.csv", std::ios::binary);
  std::ofstream icustays(out_dir / "ICUSTAYS.csv", std::ios::binary);
  std::ofstream chartevents(out_dir / "CHARTEVENTS.csv", std::ios::binary);
  std::ofstream diagnoses(out_dir / "DIAGNOSES.csv", std::ios::binary);
  if (!patients || !admissions || !icustays || !chartevents || !diagnoses) {
    throw IoError("cannot write tables into " + out_dir.string());
  }
  patients << "SUBJECT_ID,GENDER,DOB,DOD\n";
  admissions << "SUBJECT_ID,HADM_ID,ADMITTIME,DISCHTIME,DEATHTIME\n";
  icustays << "SUBJECT_ID,HADM_ID,ICUSTAY_ID,INTIME,OUTTIME,LOS\n";
  chartevents << "SUBJECT_ID,HADM_ID,ICUSTAY_ID,CHARTTIME,ITEMID,VALUE,VALUEUOM\n";
  diagnoses << "SUBJECT_ID,HADM_ID,ICD9_CODE\n";

  GenerationReport total;
  constexpr int kChunk = 256;
  jobs = std::max(1, jobs);
  for (int begin = 0; begin < config.n_patients; begin += kChunk) {
    const int end = std::min(config.n_patients, begin + kChunk);
    std::vector<PatientOutput> outputs(end - begin);
    internal::ParallelFor(outputs.size(), jobs, [&](size_t k) {
      outputs[k] = PatientGenerator(ctx, begin + static_cast<int>(k)).Run();
    });
    for (const auto& out : outputs) {
      patients << out.patients;
      admissions << out.admissions;
      icustays << out.icustays;
      chartevents << out.chartevents;
      diagnoses << out.diagnoses;
      Accumulate(total, out.counts);
    }
  }
  for (auto* stream : {&patients, &admissions, &icustays, &chartevents, &diagnoses}) {
    stream->close();
    if (!*stream) throw IoError("failed writing tables into " + out_dir.string());
  }
  std::ofstream report(out_dir / "generation_report.txt", std::ios::binary);
  report << FormatGenerationReport(total);
  if (!report) throw IoError("cannot write generation report");
  return total;
}

GenerationReport PlantSignal(SynthConfig config, double strength,
                             const VariableTable& variables,
                             const PhenotypeMap& phenotypes,
                             const std::filesystem::path& out_dir, int jobs) {
  config.signal_strength = strength;
  return Generate(config, variables, phenotypes, out_dir, jobs);
}

std::string FormatGenerationReport(const GenerationReport& report) {
  std::string out;
  for (const auto& [name, field] : ReportFields()) {
    out += name + ": " + std::to_string(report.*field) + "\n";
  }
  return out;
}

GenerationReport ReadGenerationReport(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  GenerationReport report;
  const auto fields = ReportFields();
  std::string line;
  int line_number = 0;
  while (std::getline(in, line)) {
    ++line_number;
    if (internal::Trim(line).empty()) continue;
    const auto colon = line.find(':');
    const auto value = colon == std::string::npos
                           ? std::nullopt
                           : internal::ParseInt(line.substr(colon + 1));
    if (!value) throw ConfigError(path.string(), line_number, "bad report line");
    const std::string key(internal::Trim(line.substr(0, colon)));
    bool found = false;
    for (const auto& [name, field] : fields) {
      if (name == key) {
        report.*field = *value;
        found = true;
      }
    }
    if (!found) {
      throw ConfigError(path.string(), line_number, "unknown key '" + key + "'");
    }
  }
  return report;
}

}  // namespace icubench
