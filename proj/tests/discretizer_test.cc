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

#include "icubench/discretizer.h"

#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <random>
#include <set>

#include "icubench/error.h"
#include "icubench/pipeline.h"

namespace icubench {
namespace {

const VariableTable& Vars() { return DefaultVariables(); }

int Var(std::string_view name) { return *Vars().FindByName(name); }

EpisodeTimeline Episode(std::vector<TimelineEvent> events) {
  EpisodeTimeline ep;
  ep.stay_id = 1;
  ep.events = std::move(events);
  return ep;
}

// Random episode with values drawn inside each variable's plausible range.
EpisodeTimeline RandomEpisode(std::mt19937_64& rng, double horizon) {
  std::uniform_real_distribution<double> hours(-1.0, horizon + 2.0);
  std::uniform_int_distribution<int> var(0, Vars().size() - 1);
  std::uniform_int_distribution<int> count(0, 80);
  std::vector<TimelineEvent> events;
  const int n = count(rng);
  for (int i = 0; i < n; ++i) {
    TimelineEvent e;
    e.hours = hours(rng);
    // Coarse times create same-bin collisions.
    if (i % 3 == 0) e.hours = std::floor(e.hours * 2.0) / 2.0;
    e.variable = var(rng);
    const auto& spec = Vars()[e.variable];
    if (spec.is_categorical()) {
      e.value = std::uniform_int_distribution<int>(0, spec.ValueWidth() - 1)(rng);
    } else {
      e.value = std::uniform_real_distribution<double>(0.0, 100.0)(rng);
    }
    events.push_back(e);
  }
  CanonicalizeEvents(events);
  return Episode(std::move(events));
}

// Value of `variable` in row t, decoded from its block.
double Decode(const DiscretizedSeq& seq, int t, int variable) {
  const auto& spec = Vars()[variable];
  const int offset = Vars().value_offset(variable);
  if (!spec.is_categorical()) return seq.x(t, offset);
  for (int c = 0; c < spec.ValueWidth(); ++c) {
    if (seq.x(t, offset + c) == 1.0) return c;
  }
  return -1.0;
}

double Normal(int variable) {
  const auto& spec = Vars()[variable];
  return spec.is_categorical() ? spec.NormalCategory() : spec.NormalNumeric();
}

TEST(DiscretizeTest, LastInBinThenForwardFill) {
  const int hr = Var("Heart Rate");
  const auto seq = Discretize(Episode({{0.2, hr, 80.0}, {0.9, hr, 90.0}}), 3.0, Vars());
  ASSERT_EQ(seq.steps(), 3);
  for (int t = 0; t < 3; ++t) EXPECT_EQ(Decode(seq, t, hr), 90.0);
  EXPECT_EQ(seq.x(0, Vars().mask_column(hr)), 1.0);
  EXPECT_EQ(seq.x(1, Vars().mask_column(hr)), 0.0);
  EXPECT_EQ(seq.x(2, Vars().mask_column(hr)), 0.0);
}

TEST(DiscretizeTest, NeverObservedUsesNormalValue) {
  const int temp = Var("Temperature");
  const auto seq = Discretize(Episode({}), 5.0, Vars());
  for (int t = 0; t < seq.steps(); ++t) {
    EXPECT_EQ(Decode(seq, t, temp), Vars()[temp].NormalNumeric());
    EXPECT_EQ(seq.x(t, Vars().mask_column(temp)), 0.0);
  }
}

TEST(DiscretizeTest, ImputedCategoricalIsOneHotOfNormal) {
  const int eye = Var("Glascow coma scale eye opening");
  const auto seq = Discretize(Episode({{2.5, eye, 0.0}}), 4.0, Vars());
  EXPECT_EQ(Decode(seq, 0, eye), Vars()[eye].NormalCategory());
  EXPECT_EQ(Decode(seq, 1, eye), Vars()[eye].NormalCategory());
  EXPECT_EQ(Decode(seq, 2, eye), 0.0);
  EXPECT_EQ(Decode(seq, 3, eye), 0.0);
  EXPECT_EQ(seq.x.row(1).segment(Vars().value_offset(eye), 8).sum(), 1.0);
}

TEST(DiscretizeTest, FractionalWindowExcludesFuture) {
  const int hr = Var("Heart Rate");
  const auto seq =
      Discretize(Episode({{1.2, hr, 70.0}, {2.5, hr, 71.0}, {2.6, hr, 72.0}}), 2.5, Vars());
  ASSERT_EQ(seq.steps(), 3);
  EXPECT_EQ(Decode(seq, 2, hr), 70.0);
  EXPECT_EQ(seq.x(2, Vars().mask_column(hr)), 0.0);
}

TEST(DiscretizeTest, EmptyWindowRejected) {
  EXPECT_THROW(Discretize(Episode({}), 0.0, Vars()), DomainError);
  EXPECT_THROW(Discretize(Episode({}), -1.0, Vars()), DomainError);
  EXPECT_THROW(Discretize(Episode({}), 1.0, Vars(), {.step_hours = 0.0}), DomainError);
}

TEST(DiscretizeTest, ShorterStepGivesMoreBins) {
  const int hr = Var("Heart Rate");
  const auto seq =
      Discretize(Episode({{0.5, hr, 60.0}, {0.85, hr, 61.0}}), 4.0, Vars(), {.step_hours = 0.8});
  ASSERT_EQ(seq.steps(), 5);
  EXPECT_EQ(Decode(seq, 0, hr), 60.0);
  EXPECT_EQ(Decode(seq, 1, hr), 61.0);
  EXPECT_EQ(seq.x(1, Vars().mask_column(hr)), 1.0);
}

TEST(DiscretizeTest, DenseHourlySeriesIsReproduced) {
  std::mt19937_64 rng(3);
  std::vector<TimelineEvent> events;
  std::vector<std::vector<double>> truth(6, std::vector<double>(Vars().size()));
  for (int t = 0; t < 6; ++t) {
    for (int v = 0; v < Vars().size(); ++v) {
      const auto& spec = Vars()[v];
      const double value =
          spec.is_categorical()
              ? std::uniform_int_distribution<int>(0, spec.ValueWidth() - 1)(rng)
              : std::uniform_real_distribution<double>(0.0, 50.0)(rng);
      truth[t][v] = value;
      events.push_back({t + 0.5, v, value});
    }
  }
  const auto seq = Discretize(Episode(events), 6.0, Vars());
  for (int t = 0; t < 6; ++t) {
    for (int v = 0; v < Vars().size(); ++v) {
      EXPECT_EQ(Decode(seq, t, v), truth[t][v]);
      EXPECT_EQ(seq.x(t, Vars().mask_column(v)), 1.0);
    }
  }
}

TEST(DiscretizeTest, RandomEpisodesMatchBruteForce) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    const double tau = std::uniform_real_distribution<double>(0.3, 30.0)(rng);
    const auto ep = RandomEpisode(rng, tau);
    const auto seq = Discretize(ep, tau, Vars());
    ASSERT_EQ(seq.x.cols(), 76);
    ASSERT_EQ(seq.steps(), static_cast<int>(std::ceil(tau)));

    // Brute force: last raw observation per (variable, bin).
    std::map<std::pair<int, int>, double> groups;
    for (const auto& e : ep.events) {
      if (e.hours < 0.0 || e.hours >= tau) continue;
      groups[{e.variable, static_cast<int>(std::floor(e.hours))}] = e.value;
    }
    const double mask_cells = seq.x.rightCols(17).sum();
    EXPECT_EQ(mask_cells, static_cast<double>(groups.size()));

    for (int v = 0; v < Vars().size(); ++v) {
      for (int t = 0; t < seq.steps(); ++t) {
        const double mask = seq.x(t, Vars().mask_column(v));
        ASSERT_TRUE(mask == 0.0 || mask == 1.0);
        const double value = Decode(seq, t, v);
        const auto it = groups.find({v, t});
        if (mask == 1.0) {
          ASSERT_NE(it, groups.end());
          EXPECT_EQ(value, it->second);
        } else {
          EXPECT_EQ(it, groups.end());
          EXPECT_EQ(value, t == 0 ? Normal(v) : Decode(seq, t - 1, v));
        }
        if (Vars()[v].is_categorical()) {
          EXPECT_EQ(seq.x.row(t).segment(Vars().value_offset(v), Vars()[v].ValueWidth()).sum(),
                    1.0);
        }
      }
    }
  }
}

TEST(DiscretizeTest, IntegerPrefixesAgree) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 30; ++trial) {
    const auto ep = RandomEpisode(rng, 20.0);
    const auto full = Discretize(ep, 20.0, Vars());
    for (int k = 1; k <= 20; k += 3) {
      const auto prefix = Discretize(ep, k, Vars());
      EXPECT_EQ(prefix.x, full.x.topRows(k));
    }
  }
}

TEST(StandardizerTest, PooledMomentsAreStandard) {
  std::mt19937_64 rng(9);
  std::vector<DiscretizedSeq> train;
  for (int i = 0; i < 20; ++i) train.push_back(Discretize(RandomEpisode(rng, 12.0), 12.0, Vars()));
  const auto standardizer = Standardizer::Fit(train, Vars());
  EXPECT_EQ(standardizer.columns().size(), 12u);

  std::vector<DiscretizedSeq> applied;
  for (const auto& seq : train) applied.push_back(standardizer.Applied(seq));
  for (int c : standardizer.columns()) {
    double n = 0.0, sum = 0.0, sq = 0.0;
    for (const auto& seq : applied) {
      n += seq.steps();
      sum += seq.x.col(c).sum();
      sq += seq.x.col(c).squaredNorm();
    }
    const double mean = sum / n;
    const double var = sq / n - mean * mean;
    EXPECT_LT(std::abs(mean), 1e-9) << "column " << c;
    // Columns that never left their normal value are constant and become zero.
    if (var > 0.0) {
      EXPECT_LT(std::abs(std::sqrt(var) - 1.0), 1e-9) << "column " << c;
    }
  }
  // One-hot and mask columns are untouched.
  const std::set<int> scaled(standardizer.columns().begin(), standardizer.columns().end());
  for (size_t i = 0; i < train.size(); ++i) {
    for (int c = 0; c < 76; ++c) {
      if (!scaled.count(c)) {
        EXPECT_EQ(applied[i].x.col(c), train[i].x.col(c));
      }
    }
  }
}

TEST(StandardizerTest, ConstantColumnBecomesZero) {
  const std::vector<DiscretizedSeq> train = {Discretize(Episode({}), 4.0, Vars())};
  const auto standardizer = Standardizer::Fit(train, Vars());
  for (double s : standardizer.stds()) EXPECT_EQ(s, 1.0);
  const auto applied = standardizer.Applied(train[0]);
  for (int c : standardizer.columns()) EXPECT_EQ(applied.x.col(c).cwiseAbs().sum(), 0.0);
}

TEST(StandardizerTest, DoubleApplicationRefused) {
  std::mt19937_64 rng(2);
  std::vector<DiscretizedSeq> train = {Discretize(RandomEpisode(rng, 8.0), 8.0, Vars())};
  const auto standardizer = Standardizer::Fit(train, Vars());
  auto seq = standardizer.Applied(train[0]);
  EXPECT_EQ(seq.standardized_with, standardizer.fingerprint());
  EXPECT_THROW(standardizer.Apply(seq), ContractError);
  EXPECT_THROW(Standardizer::Fit(std::vector<DiscretizedSeq>{seq}, Vars()), ContractError);
  EXPECT_THROW(Standardizer::Fit(std::vector<DiscretizedSeq>{}, Vars()), DomainError);
}

TEST(StandardizerTest, SerializationRoundTrip) {
  std::mt19937_64 rng(4);
  std::vector<DiscretizedSeq> train;
  for (int i = 0; i < 5; ++i) train.push_back(Discretize(RandomEpisode(rng, 10.0), 10.0, Vars()));
  const auto fitted = Standardizer::Fit(train, Vars());
  const auto parsed = Standardizer::Parse(fitted.Serialize(), "mem");
  EXPECT_EQ(parsed.columns(), fitted.columns());
  EXPECT_EQ(parsed.means(), fitted.means());
  EXPECT_EQ(parsed.stds(), fitted.stds());
  EXPECT_EQ(parsed.fingerprint(), fitted.fingerprint());
  EXPECT_THROW(Standardizer::Parse("column: 1 2\n", "mem"), ConfigError);
}

TEST(ChannelManifestTest, DescribesEveryColumn) {
  const auto text = ChannelManifest(Vars());
  int lines = 0, masks = 0;
  size_t pos = 0;
  while (pos < text.size()) {
    const size_t end = text.find('\n', pos);
    const auto line = text.substr(pos, end - pos);
    EXPECT_EQ(line.substr(0, line.find('\t')), std::to_string(lines));
    if (line.find("\tmask\t") != std::string::npos) ++masks;
    ++lines;
    pos = end + 1;
  }
  EXPECT_EQ(lines, 76);
  EXPECT_EQ(masks, 17);
  EXPECT_NE(text.find("\tvalue\tGlascow coma scale eye opening\t4 Spontaneously\n"),
            std::string::npos);
}

TEST(ChannelManifestTest, ChannelColumnsPartitionInput) {
  std::set<int> seen;
  int width = 0;
  for (int v = 0; v < Vars().size(); ++v) {
    const auto cols = ChannelColumns(Vars(), v);
    EXPECT_EQ(cols.front(), Vars().mask_column(v));
    width += static_cast<int>(cols.size());
    seen.insert(cols.begin(), cols.end());
  }
  EXPECT_EQ(width, 76);
  EXPECT_EQ(seen.size(), 76u);
}

}  // namespace
}  // namespace icubench
