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

#include "icubench/metrics.h"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>

#include "icubench/csv.h"
#include "icubench/error.h"
#include "parallel.h"

namespace icubench {
namespace {

constexpr int kMaxRedrawsPerResample = 100;

void CheckBinary(std::span<const double> scores, std::span<const int> labels,
                 const char* metric) {
  if (scores.size() != labels.size()) {
    throw ShapeError(std::string(metric) + ": " + std::to_string(scores.size()) +
                     " scores but " + std::to_string(labels.size()) + " labels");
  }
  for (int label : labels) {
    if (label != 0 && label != 1) {
      throw DomainError(std::string(metric) + ": labels must be 0 or 1");
    }
  }
}

std::vector<size_t> OrderByScore(std::span<const double> scores, bool descending) {
  std::vector<size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    return descending ? scores[a] > scores[b] : scores[a] < scores[b];
  });
  return order;
}

double Percentile(std::vector<double> sorted, double q) {
  // Linear interpolation between closest ranks.
  const double position = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<size_t>(std::floor(position));
  const size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = position - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

}  // namespace

double AucRoc(std::span<const double> scores, std::span<const int> labels) {
  CheckBinary(scores, labels, "auc_roc");
  const auto order = OrderByScore(scores, /*descending=*/false);
  double positive_rank_sum = 0.0;
  double positives = 0.0;
  size_t i = 0;
  while (i < order.size()) {
    size_t j = i;
    double group_positives = 0.0;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) {
      group_positives += labels[order[j]];
      ++j;
    }
    // Ranks i+1..j share their average.
    const double average_rank = 0.5 * static_cast<double>(i + 1 + j);
    positive_rank_sum += group_positives * average_rank;
    positives += group_positives;
    i = j;
  }
  const double negatives = static_cast<double>(labels.size()) - positives;
  if (positives == 0.0 || negatives == 0.0) {
    throw UndefinedMetricError("auc_roc needs both classes");
  }
  const double u = positive_rank_sum - positives * (positives + 1.0) / 2.0;
  return u / (positives * negatives);
}

double AucPr(std::span<const double> scores, std::span<const int> labels) {
  CheckBinary(scores, labels, "auc_pr");
  const double total_positives =
      static_cast<double>(std::count(labels.begin(), labels.end(), 1));
  if (total_positives == 0.0) throw UndefinedMetricError("auc_pr needs a positive");
  const auto order = OrderByScore(scores, /*descending=*/true);
  double tp = 0.0, fp = 0.0, previous_recall = 0.0, ap = 0.0;
  size_t i = 0;
  while (i < order.size()) {
    size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) {
      (labels[order[j]] == 1 ? tp : fp) += 1.0;
      ++j;
    }
    const double recall = tp / total_positives;
    ap += (recall - previous_recall) * (tp / (tp + fp));
    previous_recall = recall;
    i = j;
  }
  return ap;
}

double Mad(std::span<const double> predictions, std::span<const double> targets) {
  if (predictions.size() != targets.size()) {
    throw ShapeError("mad: length mismatch");
  }
  if (predictions.empty()) throw UndefinedMetricError("mad of an empty set");
  double total = 0.0;
  for (size_t i = 0; i < predictions.size(); ++i) {
    total += std::abs(predictions[i] - targets[i]);
  }
  return total / static_cast<double>(predictions.size());
}

double LinearKappa(std::span<const int> predicted, std::span<const int> truth,
                   int num_classes) {
  if (predicted.size() != truth.size()) throw ShapeError("kappa: length mismatch");
  if (predicted.empty()) throw UndefinedMetricError("kappa of an empty set");
  if (num_classes < 2) throw DomainError("kappa needs at least two classes");
  const auto c = static_cast<size_t>(num_classes);
  std::vector<double> observed(c * c, 0.0), rows(c, 0.0), cols(c, 0.0);
  for (size_t k = 0; k < truth.size(); ++k) {
    const int i = truth[k], j = predicted[k];
    if (i < 0 || i >= num_classes || j < 0 || j >= num_classes) {
      throw DomainError("kappa: class index out of range");
    }
    observed[i * c + j] += 1.0;
    rows[i] += 1.0;
    cols[j] += 1.0;
  }
  const double n = static_cast<double>(truth.size());
  double weighted_observed = 0.0, weighted_expected = 0.0;
  for (size_t i = 0; i < c; ++i) {
    for (size_t j = 0; j < c; ++j) {
      const double w = std::abs(static_cast<double>(i) - static_cast<double>(j)) /
                       static_cast<double>(c - 1);
      weighted_observed += w * observed[i * c + j] / n;
      weighted_expected += w * rows[i] * cols[j] / (n * n);
    }
  }
  if (weighted_expected == 0.0) return 1.0;
  return 1.0 - weighted_observed / weighted_expected;
}

MultilabelAucResult MultilabelAuc(std::span<const double> scores,
                                  std::span<const int> labels, int num_labels) {
  if (num_labels <= 0 || scores.size() != labels.size() ||
      scores.size() % static_cast<size_t>(num_labels) != 0) {
    throw ShapeError("multilabel_auc: scores and labels must be n x " +
                     std::to_string(num_labels));
  }
  const size_t n = scores.size() / static_cast<size_t>(num_labels);
  MultilabelAucResult result;
  std::vector<double> column_scores(n);
  std::vector<int> column_labels(n);
  double sum = 0.0;
  int counted = 0;
  for (int k = 0; k < num_labels; ++k) {
    int positives = 0;
    for (size_t i = 0; i < n; ++i) {
      column_scores[i] = scores[i * num_labels + k];
      column_labels[i] = labels[i * num_labels + k];
      positives += column_labels[i] == 1;
    }
    if (positives == 0 || positives == static_cast<int>(n)) {
      result.per_label.emplace_back();
      result.excluded_labels.push_back(k);
      continue;
    }
    const double auc = AucRoc(column_scores, column_labels);
    result.per_label.emplace_back(auc);
    sum += auc;
    ++counted;
  }
  if (counted == 0) throw UndefinedMetricError("multilabel_auc: no label has both classes");
  result.macro = sum / counted;
  result.micro = AucRoc(scores, labels);
  return result;
}

ScoredSet MicroPool(std::span<const ScoredSet> per_stay) {
  ScoredSet pooled;
  for (const auto& set : per_stay) {
    if (set.scores.size() != set.labels.size()) {
      throw ShapeError("micro_pool: scores and labels differ in length");
    }
    pooled.scores.insert(pooled.scores.end(), set.scores.begin(), set.scores.end());
    pooled.labels.insert(pooled.labels.end(), set.labels.begin(), set.labels.end());
  }
  return pooled;
}

CiResult BootstrapCi(const std::function<double(std::span<const size_t>)>& metric,
                     size_t units, int resamples, std::uint64_t seed, int jobs) {
  if (units == 0) throw UndefinedMetricError("bootstrap of an empty set");
  if (resamples <= 0) throw DomainError("bootstrap needs at least one resample");
  std::vector<size_t> identity(units);
  std::iota(identity.begin(), identity.end(), 0);
  CiResult result;
  result.point = metric(identity);
  result.resamples = resamples;
  result.seed = seed;

  std::vector<double> values(resamples);
  std::vector<int> redraws(resamples, 0);
  internal::ParallelFor(static_cast<size_t>(resamples), jobs, [&](size_t r) {
    std::mt19937_64 rng(internal::StreamSeed(seed, r));
    std::uniform_int_distribution<size_t> pick(0, units - 1);
    std::vector<size_t> sample(units);
    for (int attempt = 0;; ++attempt) {
      for (auto& index : sample) index = pick(rng);
      try {
        values[r] = metric(sample);
        return;
      } catch (const UndefinedMetricError&) {
        if (attempt + 1 >= kMaxRedrawsPerResample) throw;
        ++redraws[r];
      }
    }
  });
  result.redrawn = std::accumulate(redraws.begin(), redraws.end(), 0);
  std::sort(values.begin(), values.end());
  result.lower = std::min(Percentile(values, 0.025), result.point);
  result.upper = std::max(Percentile(values, 0.975), result.point);
  return result;
}

CalibrationCurve Calibration(std::span<const double> scores,
                             std::span<const int> labels, int num_bins) {
  CheckBinary(scores, labels, "calibration");
  if (scores.empty()) throw UndefinedMetricError("calibration of an empty set");
  if (num_bins <= 0) throw DomainError("calibration needs at least one bin");
  const auto order = OrderByScore(scores, /*descending=*/false);
  const size_t n = order.size();
  CalibrationCurve curve;
  size_t begin = 0;
  for (int b = 0; b < num_bins && begin < n; ++b) {
    size_t end = static_cast<size_t>(std::llround(
        static_cast<double>(n) * static_cast<double>(b + 1) / num_bins));
    end = std::max(end, begin + 1);
    while (end < n && scores[order[end]] == scores[order[end - 1]]) ++end;
    CalibrationBin bin;
    double predicted = 0.0, observed = 0.0;
    for (size_t i = begin; i < end; ++i) {
      predicted += scores[order[i]];
      observed += labels[order[i]];
    }
    bin.count = static_cast<std::int64_t>(end - begin);
    bin.mean_predicted = predicted / static_cast<double>(bin.count);
    bin.observed_rate = observed / static_cast<double>(bin.count);
    curve.bins.push_back(bin);
    begin = end;
  }
  curve.merged_bins = num_bins - static_cast<int>(curve.bins.size());
  return curve;
}

ExtendedLosResult ExtendedLosAuc(std::span<const LosPrediction> predictions) {
  std::map<std::int64_t, const LosPrediction*> at_24h;
  std::map<std::int64_t, bool> seen;
  for (const auto& p : predictions) {
    seen[p.stay_id] = true;
    if (p.window_end_hours == kExtendedLosPredictionHour) at_24h[p.stay_id] = &p;
  }
  ExtendedLosResult result;
  for (const auto& [stay, unused] : seen) {
    const auto it = at_24h.find(stay);
    if (it == at_24h.end()) {
      ++result.skipped_stays;
      continue;
    }
    const LosPrediction& p = *it->second;
    double score = 0.0;
    for (int k = kFirstExtendedLosBucket; k < kNumLosBuckets; ++k) {
      score += p.probabilities[k];
    }
    result.scored.scores.push_back(score);
    result.scored.labels.push_back(p.total_los_hours >= kExtendedLosHours ? 1 : 0);
    ++result.stays;
  }
  result.auc_roc = AucRoc(result.scored.scores, result.scored.labels);
  return result;
}

std::optional<double> Pearson(std::span<const std::optional<double>> x,
                              std::span<const std::optional<double>> y) {
  if (x.size() != y.size()) throw ShapeError("pearson: length mismatch");
  double n = 0.0, mean_x = 0.0, mean_y = 0.0;
  for (size_t i = 0; i < x.size(); ++i) {
    if (!x[i] || !y[i]) continue;
    n += 1.0;
    mean_x += *x[i];
    mean_y += *y[i];
  }
  if (n < 2.0) return std::nullopt;
  mean_x /= n;
  mean_y /= n;
  double sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (size_t i = 0; i < x.size(); ++i) {
    if (!x[i] || !y[i]) continue;
    const double dx = *x[i] - mean_x, dy = *y[i] - mean_y;
    sxx += dx * dx;
    syy += dy * dy;
    sxy += dx * dy;
  }
  if (sxx == 0.0 || syy == 0.0) return std::nullopt;
  return sxy / std::sqrt(sxx * syy);
}

CorrelationMatrix TaskLabelCorrelations(std::span<const MultitaskTargets> stays) {
  CorrelationMatrix matrix;
  matrix.names = {"ihm", "decomp_any", "mean_remaining_los"};
  for (int k = 0; k < kNumPhenotypes; ++k) {
    matrix.names.push_back("pheno_" + std::to_string(k));
  }
  const size_t width = matrix.names.size();
  std::vector<std::vector<std::optional<double>>> columns(width);
  for (const auto& t : stays) {
    columns[0].push_back(t.ihm_present ? std::optional<double>(t.ihm) : std::nullopt);
    std::optional<double> decomp_any, los_mean;
    double los_sum = 0.0, los_count = 0.0;
    for (int s = 0; s < t.steps; ++s) {
      if (t.decomp_present[s]) {
        decomp_any = std::max(decomp_any.value_or(0.0), static_cast<double>(t.decomp[s]));
      }
      if (t.los_present[s]) {
        los_sum += t.los_hours[s];
        los_count += 1.0;
      }
    }
    if (los_count > 0.0) los_mean = los_sum / los_count;
    columns[1].push_back(decomp_any);
    columns[2].push_back(los_mean);
    for (int k = 0; k < kNumPhenotypes; ++k) {
      columns[3 + k].push_back(t.pheno_present && k < static_cast<int>(t.phenotypes.size())
                                   ? std::optional<double>(t.phenotypes[k])
                                   : std::nullopt);
    }
  }
  matrix.values.assign(width, std::vector<std::optional<double>>(width));
  for (size_t i = 0; i < width; ++i) {
    for (size_t j = i; j < width; ++j) {
      const auto r = Pearson(columns[i], columns[j]);
      matrix.values[i][j] = r;
      matrix.values[j][i] = r;
    }
  }
  return matrix;
}

std::string FormatCorrelationCsv(const CorrelationMatrix& matrix) {
  std::string out = "label";
  for (const auto& name : matrix.names) out += "," + CsvEscape(name);
  out += "\n";
  for (size_t i = 0; i < matrix.names.size(); ++i) {
    out += CsvEscape(matrix.names[i]);
    for (const auto& value : matrix.values[i]) {
      out += ",";
      if (value) out += FormatDouble(*value);
    }
    out += "\n";
  }
  return out;
}

std::string FormatCalibrationCsv(const CalibrationCurve& curve) {
  std::string out = "bin,mean_predicted,observed_rate,count\n";
  for (size_t b = 0; b < curve.bins.size(); ++b) {
    out += std::to_string(b) + "," + FormatDouble(curve.bins[b].mean_predicted) + "," +
           FormatDouble(curve.bins[b].observed_rate) + "," +
           std::to_string(curve.bins[b].count) + "\n";
  }
  return out;
}

}  // namespace icubench
