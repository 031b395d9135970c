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

#include "icubench/featlin.h"

#include <algorithm>
#include <cmath>
#include <random>

#include "icubench/checkpoint.h"
#include "icubench/csv.h"
#include "icubench/error.h"
#include "parallel.h"

namespace icubench {
namespace {

constexpr double kSubsequenceFraction[kNumSubsequences] = {1.0, 0.1, 0.25, 0.5,
                                                           0.5, 0.25, 0.1};

constexpr const char* kLinearFormat = "icubench-linear";
constexpr int kLinearVersion = 1;

// Writes the six statistics of `values` to out[0..5].
void Summarize(std::span<const double> values, double* out) {
  const auto n = static_cast<double>(values.size());
  std::fill(out, out + kNumStatistics, 0.0);
  if (values.empty()) return;
  double lo = values[0], hi = values[0], sum = 0.0;
  for (double v : values) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
    sum += v;
  }
  const double mean = sum / n;
  double m2 = 0.0, m3 = 0.0;
  for (double v : values) {
    const double d = v - mean;
    m2 += d * d;
    m3 += d * d * d;
  }
  const double sd = values.size() >= 2 ? std::sqrt(m2 / (n - 1.0)) : 0.0;
  double skew = 0.0;
  if (values.size() >= 3 && sd > 0.0) skew = (m3 / n) / (sd * sd * sd);
  out[0] = lo;
  out[1] = hi;
  out[2] = mean;
  out[3] = sd;
  out[4] = skew;
  out[5] = n;
}

void CheckFinite(const nd::Matrix& m, const char* what) {
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      if (!std::isfinite(m(r, c))) {
        throw DomainError(std::string("non-finite ") + what + " at row " +
                          std::to_string(r) + ", column " + std::to_string(c));
      }
    }
  }
}

// Linear parameters of one optimization problem.
struct Params {
  nd::Matrix w;
  Eigen::RowVectorXd b;

  Params& operator+=(const Params& o) {
    w += o.w;
    b += o.b;
    return *this;
  }
  Params Scaled(double s) const { return {w * s, b * s}; }
  double Dot(const Params& o) const { return (w.array() * o.w.array()).sum() + b.dot(o.b); }
  double SquaredNorm() const { return w.squaredNorm() + b.squaredNorm(); }
};

Params operator-(const Params& a, const Params& b) { return {a.w - b.w, a.b - b.b}; }

class Problem {
 public:
  Problem(const nd::Matrix& x, const nd::Matrix& y, LinearKind kind, Regularization reg,
          double C)
      : x_(x), y_(y), kind_(kind), reg_(reg), C_(C) {}

  // Logits of `p` on every row.
  nd::Matrix Logits(const Params& p) const {
    nd::Matrix z = x_ * p.w;
    z.rowwise() += p.b;
    return z;
  }

  // Mean cross-entropy of logits `z`. Fills the residual dLoss/dz when given.
  double CrossEntropy(const nd::Matrix& z, nd::Matrix* residual) const {
    const double n = static_cast<double>(z.rows());
    double loss = 0.0;
    if (residual) residual->resize(z.rows(), z.cols());
    if (kind_ == LinearKind::kLogistic) {
      for (Eigen::Index r = 0; r < z.rows(); ++r) {
        for (Eigen::Index c = 0; c < z.cols(); ++c) {
          const double v = z(r, c);
          const double softplus = v > 0.0 ? v + std::log1p(std::exp(-v)) : std::log1p(std::exp(v));
          loss += softplus - y_(r, c) * v;
          if (residual) {
            const double p = v >= 0.0 ? 1.0 / (1.0 + std::exp(-v))
                                      : std::exp(v) / (1.0 + std::exp(v));
            (*residual)(r, c) = (p - y_(r, c)) / n;
          }
        }
      }
    } else {
      for (Eigen::Index r = 0; r < z.rows(); ++r) {
        const double peak = z.row(r).maxCoeff();
        const auto e = (z.row(r).array() - peak).exp();
        const double total = e.sum();
        loss += peak + std::log(total) - (y_.row(r).array() * z.row(r).array()).sum();
        if (residual) residual->row(r) = (e / total - y_.row(r).array()).matrix() / n;
      }
    }
    return loss / n;
  }

  // Smooth part of the objective: the mean cross-entropy.
  double Smooth(const nd::Matrix& z, Params* grad) const {
    nd::Matrix residual;
    const double f = CrossEntropy(z, grad ? &residual : nullptr);
    if (grad) {
      grad->w = x_.transpose() * residual;
      grad->b = residual.colwise().sum();
    }
    return f;
  }

  double Penalty(const Params& p) const {
    return reg_ == Regularization::kL1 ? p.w.cwiseAbs().sum() / C_
                                       : 0.5 * p.w.squaredNorm() / C_;
  }

  // Both penalties act through their exact proximal maps, so the step size
  // depends on the cross-entropy curvature only.
  Params Prox(Params p, double step) const {
    const double t = step / C_;
    if (reg_ == Regularization::kL1) {
      p.w = p.w.unaryExpr([t](double v) {
        return v > t ? v - t : (v < -t ? v + t : 0.0);
      });
    } else {
      p.w /= 1.0 + t;
    }
    return p;
  }

  // Norm of the minimum-norm subgradient of the full objective.
  double Stationarity(const Params& p, const Params& smooth_grad) const {
    double sq = smooth_grad.b.squaredNorm();
    for (Eigen::Index i = 0; i < p.w.size(); ++i) {
      double g = smooth_grad.w.data()[i];
      const double w = p.w.data()[i];
      const double t = 1.0 / C_;
      if (reg_ == Regularization::kL2) {
        g += w * t;
      } else {
        if (w > 0.0) {
          g += t;
        } else if (w < 0.0) {
          g -= t;
        } else {
          g = std::max(std::abs(g) - t, 0.0);
        }
      }
      sq += g * g;
    }
    return std::sqrt(sq);
  }

 private:
  const nd::Matrix& x_;
  const nd::Matrix& y_;
  LinearKind kind_;
  Regularization reg_;
  double C_;
};

struct Solution {
  Params params;
  int iterations = 0;
  double stationarity = 0.0;
};

// FISTA with backtracking and gradient-based restarts.
Solution Solve(const Problem& problem, Params x, const LinearTrainConfig& config) {
  nd::Matrix zx = problem.Logits(x);
  Params grad_x;
  problem.Smooth(zx, &grad_x);
  Solution solution;
  solution.stationarity = problem.Stationarity(x, grad_x);
  if (solution.stationarity < config.tolerance) {
    solution.params = std::move(x);
    return solution;
  }
  Params y = x;
  nd::Matrix zy = zx;
  double lipschitz = 1.0;
  double t = 1.0;
  for (int iter = 1; iter <= config.max_iterations; ++iter) {
    Params grad_y;
    const double fy = problem.Smooth(zy, &grad_y);
    Params next;
    nd::Matrix znext;
    double fnext = 0.0;
    for (;;) {
      Params trial = y;
      trial += grad_y.Scaled(-1.0 / lipschitz);
      next = problem.Prox(std::move(trial), 1.0 / lipschitz);
      znext = problem.Logits(next);
      fnext = problem.Smooth(znext, nullptr);
      const Params diff = next - y;
      if (fnext <= fy + grad_y.Dot(diff) + 0.5 * lipschitz * diff.SquaredNorm() +
                       1e-12 * std::abs(fy)) {
        break;
      }
      lipschitz *= 2.0;
      if (!std::isfinite(lipschitz) || lipschitz > 1e300) {
        throw NumericError("linear solver line search failed");
      }
    }
    Params grad_next;
    problem.Smooth(znext, &grad_next);
    solution.iterations = iter;
    solution.stationarity = problem.Stationarity(next, grad_next);
    if (solution.stationarity < config.tolerance) {
      solution.params = std::move(next);
      return solution;
    }
    const Params step = next - x;
    if ((y - next).Dot(step) > 0.0) {
      t = 1.0;  // momentum points uphill
      y = next;
      zy = znext;
    } else {
      const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
      const double beta = (t - 1.0) / t_next;
      y = next;
      y += step.Scaled(beta);
      zy = znext + beta * (znext - zx);
      t = t_next;
    }
    x = std::move(next);
    zx = std::move(znext);
    lipschitz *= 0.9;
  }
  solution.params = std::move(x);
  return solution;
}

}  // namespace

const char* SubsequenceName(int s) {
  static constexpr const char* kNames[kNumSubsequences] = {
      "full", "first10", "first25", "first50", "last50", "last25", "last10"};
  if (s < 0 || s >= kNumSubsequences) throw DomainError("bad subsequence index");
  return kNames[s];
}

const char* StatisticName(int k) {
  static constexpr const char* kNames[kNumStatistics] = {"min",  "max",  "mean",
                                                         "std",  "skew", "count"};
  if (k < 0 || k >= kNumStatistics) throw DomainError("bad statistic index");
  return kNames[k];
}

int FeatureCount(const VariableTable& variables) {
  return variables.size() * kNumSubsequences * kNumStatistics;
}

int FeatureIndex(int variable, int subsequence, int statistic) {
  return (variable * kNumSubsequences + subsequence) * kNumStatistics + statistic;
}

std::vector<std::string> FeatureNames(const VariableTable& variables) {
  std::vector<std::string> names;
  names.reserve(FeatureCount(variables));
  for (int v = 0; v < variables.size(); ++v) {
    for (int s = 0; s < kNumSubsequences; ++s) {
      for (int k = 0; k < kNumStatistics; ++k) {
        names.push_back(variables[v].name + "|" + SubsequenceName(s) + "|" +
                        StatisticName(k));
      }
    }
  }
  return names;
}

std::vector<double> ExtractFeatures(const EpisodeTimeline& episode,
                                    double window_end_hours,
                                    const VariableTable& variables) {
  if (!(window_end_hours > 0.0) || !std::isfinite(window_end_hours)) {
    throw DomainError("feature window must have positive duration (stay " +
                      std::to_string(episode.stay_id) + ")");
  }
  const int nvars = variables.size();
  std::vector<std::vector<std::pair<double, double>>> series(nvars);
  for (const auto& e : episode.events) {
    if (e.hours < 0.0 || e.hours > window_end_hours) continue;
    const auto& spec = variables[e.variable];
    const double value =
        spec.is_categorical() ? spec.category_scores.at(static_cast<size_t>(e.value)) : e.value;
    series[e.variable].emplace_back(e.hours, value);
  }
  std::vector<double> features(FeatureCount(variables), 0.0);
  std::vector<double> values;
  for (int v = 0; v < nvars; ++v) {
    auto& s = series[v];
    std::stable_sort(s.begin(), s.end(),
                     [](const auto& a, const auto& b) { return a.first < b.first; });
    for (int sub = 0; sub < kNumSubsequences; ++sub) {
      const double span = kSubsequenceFraction[sub] * window_end_hours;
      const double lo = sub <= 3 ? 0.0 : window_end_hours - span;
      const double hi = sub == 0 ? window_end_hours : (sub <= 3 ? span : window_end_hours);
      values.clear();
      for (const auto& [t, value] : s) {
        if (t >= lo && t <= hi) values.push_back(value);
      }
      Summarize(values, &features[FeatureIndex(v, sub, 0)]);
    }
  }
  return features;
}

nd::Matrix FeatureMatrix(std::span<const TaskInstance> instances,
                         const EpisodeStore& store, const VariableTable& variables,
                         int jobs) {
  nd::Matrix out(static_cast<Eigen::Index>(instances.size()), FeatureCount(variables));
  internal::ParallelFor(instances.size(), jobs, [&](size_t i) {
    const auto& inst = instances[i];
    const auto row = ExtractFeatures(store.Find(inst.stay_id), inst.window_end_hours, variables);
    out.row(static_cast<Eigen::Index>(i)) =
        Eigen::Map<const Eigen::RowVectorXd>(row.data(), static_cast<Eigen::Index>(row.size()));
  });
  return out;
}

void WriteFeatureCsv(const nd::Matrix& features, std::span<const TaskInstance> instances,
                     const VariableTable& variables, const std::filesystem::path& path) {
  if (features.rows() != static_cast<Eigen::Index>(instances.size()) ||
      features.cols() != FeatureCount(variables)) {
    throw ShapeError("feature matrix " + nd::ShapeString(features) +
                     " does not match the instance list");
  }
  CsvWriter writer(path);
  std::vector<std::string> row = {"stay", "window_end_hours"};
  for (auto& name : FeatureNames(variables)) row.push_back(std::move(name));
  writer.WriteRow(row);
  for (size_t i = 0; i < instances.size(); ++i) {
    row.assign({std::to_string(instances[i].stay_id),
                FormatDouble(instances[i].window_end_hours)});
    for (Eigen::Index c = 0; c < features.cols(); ++c) {
      row.push_back(FormatDouble(features(static_cast<Eigen::Index>(i), c)));
    }
    writer.WriteRow(row);
  }
  writer.Close();
}

std::vector<size_t> SubsampleIndices(size_t n, std::int64_t cap, std::uint64_t seed) {
  std::vector<size_t> idx(n);
  for (size_t i = 0; i < n; ++i) idx[i] = i;
  if (cap < 0 || static_cast<size_t>(cap) >= n) return idx;
  std::mt19937_64 rng(seed);
  const auto k = static_cast<size_t>(cap);
  for (size_t i = 0; i < k; ++i) {
    std::uniform_int_distribution<size_t> pick(i, n - 1);
    std::swap(idx[i], idx[pick(rng)]);
  }
  idx.resize(k);
  std::sort(idx.begin(), idx.end());
  return idx;
}

FeatureScaler FeatureScaler::Fit(const nd::Matrix& features) {
  if (features.rows() == 0) throw DomainError("feature scaler needs rows");
  CheckFinite(features, "feature");
  FeatureScaler scaler;
  scaler.means = features.colwise().mean();
  scaler.stds =
      ((features.rowwise() - scaler.means).array().square().colwise().sum() /
       static_cast<double>(features.rows()))
          .sqrt()
          .matrix();
  for (Eigen::Index c = 0; c < scaler.stds.size(); ++c) {
    if (!(scaler.stds[c] > 0.0)) scaler.stds[c] = 1.0;
  }
  return scaler;
}

nd::Matrix FeatureScaler::Apply(const nd::Matrix& features) const {
  if (features.cols() != means.size()) {
    throw ShapeError("feature scaler expects " + std::to_string(means.size()) +
                     " columns, got " + nd::ShapeString(features));
  }
  return ((features.rowwise() - means).array().rowwise() / stds.array()).matrix();
}

const char* RegularizationName(Regularization reg) {
  return reg == Regularization::kL1 ? "l1" : "l2";
}

Regularization ParseRegularization(std::string_view name) {
  if (name == "l1") return Regularization::kL1;
  if (name == "l2") return Regularization::kL2;
  throw DomainError("unknown regularization '" + std::string(name) + "'");
}

double LinearObjective(const LinearModel& model, const nd::Matrix& features,
                       const nd::Matrix& targets, LinearModel* grad) {
  if (features.cols() != model.features() || targets.cols() != model.outputs() ||
      targets.rows() != features.rows() || model.bias.size() != model.outputs()) {
    throw ShapeError("linear objective: features " + nd::ShapeString(features) +
                     ", targets " + nd::ShapeString(targets) + ", weights " +
                     nd::ShapeString(model.weights));
  }
  const Problem problem(features, targets, model.kind, model.reg, model.C);
  const Params p{model.weights, model.bias};
  Params g;
  double f = problem.Smooth(problem.Logits(p), grad ? &g : nullptr);
  f += problem.Penalty(p);
  if (grad) {
    *grad = model;
    if (model.reg == Regularization::kL1) {
      g.w += (p.w.array().sign() / model.C).matrix();
    } else {
      g.w += p.w / model.C;
    }
    grad->weights = std::move(g.w);
    grad->bias = std::move(g.b);
  }
  return f;
}

LinearModel TrainLinear(const nd::Matrix& features, const nd::Matrix& targets,
                        LinearKind kind, const LinearTrainConfig& config) {
  if (features.rows() == 0) throw DomainError("linear model needs training rows");
  if (targets.rows() != features.rows() || targets.cols() == 0) {
    throw ShapeError("targets " + nd::ShapeString(targets) + " do not match features " +
                     nd::ShapeString(features));
  }
  if (!(config.C > 0.0) || !std::isfinite(config.C)) {
    throw DomainError("inverse regularization strength C must be positive");
  }
  CheckFinite(features, "feature");
  CheckFinite(targets, "target");

  LinearModel model;
  model.kind = kind;
  model.reg = config.reg;
  model.C = config.C;
  model.seed = config.seed;
  model.weights = nd::Matrix::Zero(features.cols(), targets.cols());
  model.bias = Eigen::RowVectorXd::Zero(targets.cols());

  const auto init = [&](Eigen::Index outputs) {
    return Params{nd::Matrix::Zero(features.cols(), outputs),
                  Eigen::RowVectorXd::Zero(outputs)};
  };
  if (kind == LinearKind::kSoftmax) {
    const Problem problem(features, targets, kind, config.reg, config.C);
    auto sol = Solve(problem, init(targets.cols()), config);
    model.weights = std::move(sol.params.w);
    model.bias = std::move(sol.params.b);
    model.iterations.push_back(sol.iterations);
    model.final_gradient_norm.push_back(sol.stationarity);
    return model;
  }
  for (Eigen::Index c = 0; c < targets.cols(); ++c) {
    const nd::Matrix column = targets.col(c);
    const Problem problem(features, column, kind, config.reg, config.C);
    auto sol = Solve(problem, init(1), config);
    model.weights.col(c) = sol.params.w.col(0);
    model.bias[c] = sol.params.b[0];
    model.iterations.push_back(sol.iterations);
    model.final_gradient_norm.push_back(sol.stationarity);
  }
  return model;
}

LinearModel FitLinear(const nd::Matrix& raw_features, const nd::Matrix& targets,
                      LinearKind kind, const LinearTrainConfig& config) {
  auto scaler = FeatureScaler::Fit(raw_features);
  auto model = TrainLinear(scaler.Apply(raw_features), targets, kind, config);
  model.scaler = std::move(scaler);
  return model;
}

nd::Matrix PredictLinear(const LinearModel& model, const nd::Matrix& features) {
  if (features.cols() != model.features()) {
    throw ShapeError("linear model expects " + std::to_string(model.features()) +
                     " features, got " + nd::ShapeString(features));
  }
  nd::Matrix z = model.scaler.fitted() ? model.scaler.Apply(features) * model.weights
                                       : features * model.weights;
  z.rowwise() += model.bias;
  if (model.kind == LinearKind::kLogistic) {
    return z.unaryExpr([](double v) {
      return v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
    });
  }
  for (Eigen::Index r = 0; r < z.rows(); ++r) {
    const auto e = (z.row(r).array() - z.row(r).maxCoeff()).exp();
    z.row(r) = (e / e.sum()).matrix();
  }
  return z;
}

nd::Matrix LinearTargets(std::span<const TaskInstance> instances, Task task) {
  const auto n = static_cast<Eigen::Index>(instances.size());
  switch (task) {
    case Task::kIhm:
    case Task::kDecomp: {
      nd::Matrix y(n, 1);
      for (Eigen::Index i = 0; i < n; ++i) y(i, 0) = instances[i].label;
      return y;
    }
    case Task::kLos: {
      nd::Matrix y = nd::Matrix::Zero(n, kNumLosBuckets);
      for (Eigen::Index i = 0; i < n; ++i) y(i, instances[i].los_bucket) = 1.0;
      return y;
    }
    case Task::kPheno: {
      nd::Matrix y(n, kNumPhenotypes);
      for (Eigen::Index i = 0; i < n; ++i) {
        if (instances[i].phenotypes.size() != static_cast<size_t>(kNumPhenotypes)) {
          throw ShapeError("phenotype instance without 25 labels");
        }
        for (int k = 0; k < kNumPhenotypes; ++k) y(i, k) = instances[i].phenotypes[k];
      }
      return y;
    }
  }
  throw DomainError("unknown task");
}

LinearKind LinearKindFor(Task task) {
  return task == Task::kLos ? LinearKind::kSoftmax : LinearKind::kLogistic;
}

void SaveLinearModel(const LinearModel& model, const std::filesystem::path& path) {
  Checkpoint ckpt;
  ckpt.format = kLinearFormat;
  ckpt.version = kLinearVersion;
  ckpt.Set("kind", model.kind == LinearKind::kSoftmax ? "softmax" : "logistic");
  ckpt.Set("features", std::to_string(model.features()));
  ckpt.Set("outputs", std::to_string(model.outputs()));
  ckpt.Set("reg", RegularizationName(model.reg));
  ckpt.Set("C", FormatDouble(model.C));
  ckpt.Set("seed", std::to_string(model.seed));
  ckpt.tensors.emplace_back("weights", model.weights);
  ckpt.tensors.emplace_back("bias", nd::Matrix(model.bias));
  if (model.scaler.fitted()) {
    ckpt.tensors.emplace_back("scaler_means", nd::Matrix(model.scaler.means));
    ckpt.tensors.emplace_back("scaler_stds", nd::Matrix(model.scaler.stds));
  }
  WriteCheckpoint(ckpt, path);
}

LinearModel LoadLinearModel(const std::filesystem::path& path) {
  const auto ckpt = ReadCheckpoint(path, kLinearFormat, kLinearVersion);
  LinearModel model;
  const auto& kind = ckpt.Get("kind");
  if (kind == "softmax") {
    model.kind = LinearKind::kSoftmax;
  } else if (kind == "logistic") {
    model.kind = LinearKind::kLogistic;
  } else {
    throw SchemaError(path.string() + ": unknown linear model kind '" + kind + "'");
  }
  model.reg = ParseRegularization(ckpt.Get("reg"));
  model.C = ckpt.GetDouble("C");
  model.seed = static_cast<std::uint64_t>(std::stoull(ckpt.Get("seed")));
  model.weights = ckpt.Tensor("weights");
  model.bias = ckpt.Tensor("bias").row(0);
  if (model.weights.rows() != ckpt.GetInt("features") ||
      model.weights.cols() != ckpt.GetInt("outputs") ||
      model.bias.size() != model.weights.cols()) {
    throw SchemaError(path.string() + ": tensor shapes disagree with the header");
  }
  for (const auto& [name, m] : ckpt.tensors) {
    if (name == "scaler_means") model.scaler.means = m.row(0);
    if (name == "scaler_stds") model.scaler.stds = m.row(0);
  }
  if (model.scaler.means.size() != model.scaler.stds.size() ||
      (model.scaler.fitted() && model.scaler.means.size() != model.weights.rows())) {
    throw SchemaError(path.string() + ": scaler shape disagrees with the weights");
  }
  return model;
}

}  // namespace icubench
