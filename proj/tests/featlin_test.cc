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

#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <random>
#include <set>

#include "icubench/csv.h"
#include "icubench/error.h"
#include "icubench/pipeline.h"
#include "oracles.h"
#include "test_util.h"

namespace icubench {
namespace {

using testing::RelativeError;
using testing::TempDir;

const VariableTable& Vars() { return DefaultVariables(); }
int Var(std::string_view name) { return *Vars().FindByName(name); }

EpisodeTimeline Episode(std::vector<TimelineEvent> events) {
  EpisodeTimeline ep;
  ep.stay_id = 42;
  ep.events = std::move(events);
  return ep;
}

std::vector<double> Stats(const std::vector<double>& f, int variable, int sub) {
  const auto begin = f.begin() + FeatureIndex(variable, sub, 0);
  return {begin, begin + kNumStatistics};
}

// Textbook statistics in long double.
std::vector<double> OracleStats(const std::vector<double>& xs) {
  if (xs.empty()) return std::vector<double>(6, 0.0);
  long double lo = xs[0], hi = xs[0], sum = 0;
  for (double x : xs) {
    lo = std::min<long double>(lo, x);
    hi = std::max<long double>(hi, x);
    sum += x;
  }
  const long double n = xs.size();
  const long double mean = sum / n;
  long double ss = 0, cube = 0;
  for (double x : xs) {
    ss += (x - mean) * (x - mean);
    cube += (x - mean) * (x - mean) * (x - mean);
  }
  const long double sd = xs.size() < 2 ? 0 : std::sqrt(ss / (n - 1));
  const long double skew = (xs.size() < 3 || sd == 0) ? 0 : (cube / n) / (sd * sd * sd);
  return {static_cast<double>(lo),   static_cast<double>(hi),
          static_cast<double>(mean), static_cast<double>(sd),
          static_cast<double>(skew), static_cast<double>(n)};
}

TEST(FeatureTest, LayoutIs714) {
  EXPECT_EQ(FeatureCount(Vars()), 714);
  const auto names = FeatureNames(Vars());
  ASSERT_EQ(names.size(), 714u);
  EXPECT_EQ(names[0], Vars()[0].name + "|full|min");
  EXPECT_EQ(names[FeatureIndex(3, 6, 5)], Vars()[3].name + "|last10|count");
  EXPECT_EQ(std::set<std::string>(names.begin(), names.end()).size(), 714u);
}

TEST(FeatureTest, HandComputedStatistics) {
  const int hr = Var("Heart Rate");
  const auto f =
      ExtractFeatures(Episode({{0.0, hr, 1.0}, {1.0, hr, 2.0}, {2.0, hr, 3.0}}), 2.0, Vars());
  EXPECT_EQ(Stats(f, hr, 0), (std::vector<double>{1, 3, 2, 1, 0, 3}));
}

TEST(FeatureTest, UnobservedVariableIsAllZero) {
  const int hr = Var("Heart Rate");
  const int temp = Var("Temperature");
  const auto f = ExtractFeatures(Episode({{0.5, hr, 80.0}}), 10.0, Vars());
  for (int s = 0; s < kNumSubsequences; ++s) {
    EXPECT_EQ(Stats(f, temp, s), std::vector<double>(6, 0.0));
  }
}

TEST(FeatureTest, SingleObservation) {
  const int hr = Var("Heart Rate");
  const auto f = ExtractFeatures(Episode({{0.5, hr, 80.0}}), 10.0, Vars());
  EXPECT_EQ(Stats(f, hr, 0), (std::vector<double>{80, 80, 80, 0, 0, 1}));
}

TEST(FeatureTest, SubsequencesFollowElapsedTime) {
  const int hr = Var("Heart Rate");
  const auto f = ExtractFeatures(Episode({{0.5, hr, 1.0},
                                          {3.0, hr, 2.0},
                                          {6.0, hr, 3.0},
                                          {9.5, hr, 4.0},
                                          {10.0, hr, 5.0},
                                          {10.5, hr, 6.0}}),
                                 10.0, Vars());
  const auto count = [&](int s) { return Stats(f, hr, s)[5]; };
  EXPECT_EQ(count(0), 5);  // the event after the window is ignored
  EXPECT_EQ(count(1), 1);  // [0, 1]
  EXPECT_EQ(count(2), 1);  // [0, 2.5]
  EXPECT_EQ(count(3), 2);  // [0, 5]
  EXPECT_EQ(count(4), 3);  // [5, 10]
  EXPECT_EQ(count(5), 2);  // [7.5, 10]
  EXPECT_EQ(count(6), 2);  // [9, 10]
  EXPECT_EQ(Stats(f, hr, 6)[2], 4.5);
}

TEST(FeatureTest, CategoricalUsesScores) {
  const int total = Var("Glascow coma scale total");
  // Category codes "3", "15" sit at indices 0 and 12.
  const auto f = ExtractFeatures(Episode({{1.0, total, 0.0}, {2.0, total, 12.0}}), 4.0, Vars());
  EXPECT_EQ(Stats(f, total, 0)[0], 3.0);
  EXPECT_EQ(Stats(f, total, 0)[1], 15.0);
}

TEST(FeatureTest, EmptyWindowRejected) {
  EXPECT_THROW(ExtractFeatures(Episode({}), 0.0, Vars()), DomainError);
}

TEST(FeatureTest, RandomEpisodesMatchOracle) {
  std::mt19937_64 rng(21);
  const double fractions[] = {1.0, 0.1, 0.25, 0.5, 0.5, 0.25, 0.1};
  for (int trial = 0; trial < 100; ++trial) {
    const double tau = std::uniform_real_distribution<double>(1.0, 60.0)(rng);
    std::vector<TimelineEvent> events;
    const int n = std::uniform_int_distribution<int>(0, 150)(rng);
    for (int i = 0; i < n; ++i) {
      TimelineEvent e;
      e.hours = std::uniform_real_distribution<double>(-2.0, tau + 2.0)(rng);
      e.variable = std::uniform_int_distribution<int>(0, 16)(rng);
      const auto& spec = Vars()[e.variable];
      e.value = spec.is_categorical()
                    ? std::uniform_int_distribution<int>(0, spec.ValueWidth() - 1)(rng)
                    : std::normal_distribution<double>(50.0, 20.0)(rng);
      events.push_back(e);
    }
    CanonicalizeEvents(events);
    const auto f = ExtractFeatures(Episode(events), tau, Vars());
    ASSERT_EQ(f.size(), 714u);
    for (int v = 0; v < 17; ++v) {
      for (int s = 0; s < 7; ++s) {
        const double lo = s >= 4 ? tau * (1.0 - fractions[s]) : 0.0;
        const double hi = (s >= 1 && s <= 3) ? tau * fractions[s] : tau;
        std::vector<double> xs;
        for (const auto& e : events) {
          if (e.variable != v || e.hours < lo || e.hours > hi || e.hours < 0.0) continue;
          xs.push_back(Vars()[v].is_categorical()
                           ? Vars()[v].category_scores[static_cast<size_t>(e.value)]
                           : e.value);
        }
        const auto expected = OracleStats(xs);
        const auto got = Stats(f, v, s);
        for (int k = 0; k < 6; ++k) {
          EXPECT_LT(RelativeError(got[k], expected[k]), 1e-9)
              << "variable " << v << " subsequence " << s << " statistic " << k;
        }
      }
    }
  }
}

struct ToyData {
  nd::Matrix x;
  nd::Matrix y;
};

ToyData RandomProblem(int n, int d, int k, LinearKind kind, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  ToyData data{nd::Matrix(n, d), nd::Matrix::Zero(n, k)};
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < d; ++j) data.x(i, j) = normal(rng);
  }
  for (int i = 0; i < n; ++i) {
    if (kind == LinearKind::kSoftmax) {
      data.y(i, std::uniform_int_distribution<int>(0, k - 1)(rng)) = 1.0;
    } else {
      for (int c = 0; c < k; ++c) data.y(i, c) = rng() % 2;
    }
  }
  return data;
}

LinearModel RandomModel(int d, int k, LinearKind kind, Regularization reg, double C,
                        std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  LinearModel model;
  model.kind = kind;
  model.reg = reg;
  model.C = C;
  model.weights = nd::Matrix(d, k);
  model.bias = Eigen::RowVectorXd(k);
  for (Eigen::Index i = 0; i < model.weights.size(); ++i) {
    // Keep weights away from zero so |w| is differentiable.
    const double w = normal(rng);
    model.weights.data()[i] = w + (w >= 0 ? 0.1 : -0.1);
  }
  for (int c = 0; c < k; ++c) model.bias[c] = normal(rng);
  return model;
}

struct ObjectiveCase {
  LinearKind kind;
  Regularization reg;
  int outputs;
};

class LinearGradientTest : public ::testing::TestWithParam<ObjectiveCase> {};

TEST_P(LinearGradientTest, MatchesCentralDifferences) {
  const auto param = GetParam();
  const auto data = RandomProblem(30, 5, param.outputs, param.kind, 8);
  auto model = RandomModel(5, param.outputs, param.kind, param.reg, 0.7, 9);
  LinearModel grad;
  LinearObjective(model, data.x, data.y, &grad);
  const double h = 1e-5;
  double worst = 0.0;
  const auto probe = [&](double& slot, double analytic) {
    const double saved = slot;
    slot = saved + h;
    const double up = LinearObjective(model, data.x, data.y);
    slot = saved - h;
    const double down = LinearObjective(model, data.x, data.y);
    slot = saved;
    worst = std::max(worst, RelativeError(analytic, (up - down) / (2 * h)));
  };
  for (Eigen::Index i = 0; i < model.weights.size(); ++i) {
    probe(model.weights.data()[i], grad.weights.data()[i]);
  }
  for (Eigen::Index i = 0; i < model.bias.size(); ++i) probe(model.bias[i], grad.bias[i]);
  EXPECT_LT(worst, 1e-6);
}

INSTANTIATE_TEST_SUITE_P(
    Objectives, LinearGradientTest,
    ::testing::Values(ObjectiveCase{LinearKind::kLogistic, Regularization::kL2, 1},
                      ObjectiveCase{LinearKind::kLogistic, Regularization::kL1, 1},
                      ObjectiveCase{LinearKind::kLogistic, Regularization::kL2, 3},
                      ObjectiveCase{LinearKind::kSoftmax, Regularization::kL2, 10},
                      ObjectiveCase{LinearKind::kSoftmax, Regularization::kL1, 4}));

TEST(LinearTrainTest, SeparableToyIsFit) {
  nd::Matrix x(8, 2);
  x << -2, -1, -1, -2, -1.5, -0.5, -0.5, -1.5, 2, 1, 1, 2, 1.5, 0.5, 0.5, 1.5;
  nd::Matrix y(8, 1);
  y << 0, 0, 0, 0, 1, 1, 1, 1;
  const auto model = TrainLinear(x, y, LinearKind::kLogistic, {.C = 1.0});
  const auto p = PredictLinear(model, x);
  for (int i = 0; i < 8; ++i) EXPECT_EQ(p(i, 0) > 0.5, y(i, 0) == 1.0) << i;
  EXPECT_LT(model.final_gradient_norm[0], 1e-6);
}

TEST(LinearTrainTest, ConvergedSolutionIsStationary) {
  for (auto reg : {Regularization::kL2, Regularization::kL1}) {
    const auto data = RandomProblem(200, 6, 1, LinearKind::kLogistic, 13);
    const auto model = TrainLinear(data.x, data.y, LinearKind::kLogistic,
                                   {.reg = reg, .C = 0.5});
    ASSERT_LT(model.final_gradient_norm[0], 1e-6) << RegularizationName(reg);
    // Independent optimality check via the gradient of the smooth part.
    LinearModel smooth = model;
    smooth.reg = Regularization::kL2;
    smooth.C = std::numeric_limits<double>::infinity();
    LinearModel grad;
    LinearObjective(smooth, data.x, data.y, &grad);
    EXPECT_LT(std::abs(grad.bias[0]), 1e-6);
    for (int j = 0; j < 6; ++j) {
      const double w = model.weights(j, 0);
      const double g = grad.weights(j, 0);
      if (reg == Regularization::kL2) {
        EXPECT_LT(std::abs(g + w / 0.5), 1e-6);
      } else if (w != 0.0) {
        EXPECT_LT(std::abs(g + (w > 0 ? 2.0 : -2.0)), 1e-6);
      } else {
        EXPECT_LE(std::abs(g), 2.0 + 1e-6);
      }
    }
  }
}

TEST(LinearTrainTest, StrongL1PenaltyZeroesWeights) {
  const auto data = RandomProblem(100, 8, 1, LinearKind::kLogistic, 17);
  const auto model = TrainLinear(data.x, data.y, LinearKind::kLogistic,
                                 {.reg = Regularization::kL1, .C = 0.01});
  EXPECT_EQ(model.weights.cwiseAbs().maxCoeff(), 0.0);
}

TEST(LinearTrainTest, VanishingCGivesBaseRate) {
  const auto data = RandomProblem(300, 4, 1, LinearKind::kLogistic, 19);
  const auto model = TrainLinear(data.x, data.y, LinearKind::kLogistic, {.C = 1e-9});
  EXPECT_LT(model.weights.cwiseAbs().maxCoeff(), 1e-6);
  const auto p = PredictLinear(model, data.x);
  const double base = data.y.mean();
  for (Eigen::Index i = 0; i < p.rows(); ++i) EXPECT_NEAR(p(i, 0), base, 1e-6);
}

TEST(LinearTrainTest, SoftmaxBaseRateAndNormalization) {
  const auto data = RandomProblem(400, 3, 10, LinearKind::kSoftmax, 23);
  const auto model = TrainLinear(data.x, data.y, LinearKind::kSoftmax, {.C = 1e-9});
  const auto p = PredictLinear(model, data.x);
  const Eigen::RowVectorXd base = data.y.colwise().mean();
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    EXPECT_NEAR(p.row(i).sum(), 1.0, 1e-12);
    for (int c = 0; c < 10; ++c) EXPECT_NEAR(p(i, c), base[c], 1e-5);
  }
}

TEST(LinearTrainTest, PerColumnClassifiersAreIndependent) {
  const auto data = RandomProblem(150, 5, 3, LinearKind::kLogistic, 29);
  const auto joint = TrainLinear(data.x, data.y, LinearKind::kLogistic, {.C = 0.3});
  const nd::Matrix column = data.y.col(1);
  const auto single = TrainLinear(data.x, column, LinearKind::kLogistic, {.C = 0.3});
  EXPECT_EQ(joint.weights.col(1), single.weights.col(0));
  EXPECT_EQ(joint.bias[1], single.bias[0]);
}

TEST(LinearTrainTest, NonFiniteFeatureNamesCell) {
  nd::Matrix x = nd::Matrix::Ones(4, 3);
  x(2, 1) = std::nan("");
  const nd::Matrix y = nd::Matrix::Zero(4, 1);
  try {
    TrainLinear(x, y, LinearKind::kLogistic, {});
    FAIL() << "expected DomainError";
  } catch (const DomainError& e) {
    EXPECT_NE(std::string(e.what()).find("row 2, column 1"), std::string::npos) << e.what();
  }
}

TEST(LinearPredictTest, ZeroModels) {
  LinearModel binary;
  binary.weights = nd::Matrix::Zero(3, 1);
  binary.bias = Eigen::RowVectorXd::Zero(1);
  const nd::Matrix x = nd::Matrix::Random(5, 3);
  EXPECT_TRUE((PredictLinear(binary, x).array() == 0.5).all());
  LinearModel multi = binary;
  multi.kind = LinearKind::kSoftmax;
  multi.weights = nd::Matrix::Zero(3, 10);
  multi.bias = Eigen::RowVectorXd::Zero(10);
  EXPECT_LT((PredictLinear(multi, x).array() - 0.1).abs().maxCoeff(), 1e-15);
  EXPECT_THROW(PredictLinear(binary, nd::Matrix::Zero(2, 4)), ShapeError);
}

TEST(LinearPredictTest, MonotoneInPositiveWeight) {
  LinearModel model;
  model.weights = nd::Matrix(2, 1);
  model.weights << 0.8, -0.3;
  model.bias = Eigen::RowVectorXd::Constant(1, 0.1);
  nd::Matrix x(3, 2);
  x << 0.0, 1.0, 0.5, 1.0, 1.0, 1.0;
  const auto p = PredictLinear(model, x);
  EXPECT_LT(p(0, 0), p(1, 0));
  EXPECT_LT(p(1, 0), p(2, 0));
}

TEST(LinearModelIoTest, RoundTripIsExact) {
  TempDir dir;
  const auto data = RandomProblem(80, 6, 10, LinearKind::kSoftmax, 31);
  auto model = FitLinear(data.x, data.y, LinearKind::kSoftmax,
                         {.reg = Regularization::kL1, .C = 0.2, .seed = 77});
  const auto path = dir.path() / "model.bin";
  SaveLinearModel(model, path);
  const auto loaded = LoadLinearModel(path);
  EXPECT_EQ(loaded.kind, LinearKind::kSoftmax);
  EXPECT_EQ(loaded.reg, Regularization::kL1);
  EXPECT_EQ(loaded.C, 0.2);
  EXPECT_EQ(loaded.seed, 77u);
  EXPECT_EQ(PredictLinear(loaded, data.x), PredictLinear(model, data.x));

  // Truncated payloads are rejected.
  const auto bytes = testing::ReadFile(path);
  testing::WriteFile(path, bytes.substr(0, bytes.size() - 5));
  EXPECT_THROW(LoadLinearModel(path), SchemaError);
}

TEST(SubsampleTest, DeterministicSortedUnique) {
  const auto a = SubsampleIndices(1000, 100, 5);
  EXPECT_EQ(a, SubsampleIndices(1000, 100, 5));
  EXPECT_NE(a, SubsampleIndices(1000, 100, 6));
  ASSERT_EQ(a.size(), 100u);
  EXPECT_TRUE(std::is_sorted(a.begin(), a.end()));
  EXPECT_EQ(std::set<size_t>(a.begin(), a.end()).size(), 100u);
  EXPECT_EQ(SubsampleIndices(10, 100, 5).size(), 10u);
}

TEST(FeatureCsvTest, HeaderCarriesLayout) {
  TempDir dir;
  const int hr = Var("Heart Rate");
  std::vector<TaskInstance> inst(1);
  inst[0].stay_id = 42;
  inst[0].window_end_hours = 48.0;
  const auto row = ExtractFeatures(Episode({{1.0, hr, 70.0}}), 48.0, Vars());
  nd::Matrix f = Eigen::Map<const Eigen::RowVectorXd>(row.data(), 714);
  WriteFeatureCsv(f, inst, Vars(), dir.path() / "f.csv");
  CsvReader reader(dir.path() / "f.csv");
  ASSERT_EQ(reader.header().size(), 716u);
  EXPECT_EQ(reader.header()[2], Vars()[0].name + "|full|min");
  std::vector<std::string> fields;
  ASSERT_TRUE(reader.Next(fields));
  EXPECT_EQ(fields[0], "42");
  EXPECT_EQ(fields[2 + FeatureIndex(hr, 0, 2)], "70");
}

}  // namespace
}  // namespace icubench
