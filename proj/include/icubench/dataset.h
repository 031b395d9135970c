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

#ifndef ICUBENCH_DATASET_H_
#define ICUBENCH_DATASET_H_

#include <cstdint>
#include <filesystem>
#include <string>
#include <unordered_map>
#include <vector>

#include "icubench/core.h"
#include "icubench/phenotypes.h"
#include "icubench/pipeline.h"

namespace icubench {

// On-disk benchmark layout written by `build`:
//   episodes/<stay>_timeseries.csv   Hours + one column per variable
//   stays.csv                        static descriptors and outcomes
//   split.txt                        seed, fraction and test patient ids
//   cohort_report.txt                CohortReport::Format()
//   <task dir>/{train,test}_listfile.csv
struct BuildOptions {
  double test_fraction = 0.15;
  std::uint64_t split_seed = 0;
};

struct Benchmark {
  std::vector<EpisodeTimeline> episodes;  // ascending stay id
  SplitManifest manifest;
  CohortReport report;
  TaskSplit ihm;
  TaskSplit decomp;
  TaskSplit los;
  TaskSplit pheno;

  const TaskSplit& task(Task t) const;
};

// Runs every pipeline stage and task builder on MIMIC-shaped tables.
Benchmark BuildBenchmark(const std::filesystem::path& tables_dir,
                         const VariableTable& variables,
                         const PhenotypeMap& phenotypes,
                         const BuildOptions& options);

void WriteBenchmark(const Benchmark& benchmark,
                    const std::filesystem::path& out_dir,
                    const VariableTable& variables);

// Directory name of a task inside the benchmark root.
const char* TaskDirectory(Task task);
std::string EpisodeFileName(std::int64_t stay_id);

// Episodes plus split, read back from a benchmark root.
class EpisodeStore {
 public:
  EpisodeStore() = default;
  EpisodeStore(std::vector<EpisodeTimeline> episodes, SplitManifest manifest);

  const std::vector<EpisodeTimeline>& episodes() const { return episodes_; }
  const SplitManifest& manifest() const { return manifest_; }
  // Throws SchemaError for an unknown stay.
  const EpisodeTimeline& Find(std::int64_t stay_id) const;
  bool Contains(std::int64_t stay_id) const { return index_.contains(stay_id); }

 private:
  std::vector<EpisodeTimeline> episodes_;
  SplitManifest manifest_;
  std::unordered_map<std::int64_t, size_t> index_;
};

EpisodeStore LoadEpisodes(const std::filesystem::path& root,
                          const VariableTable& variables);

std::vector<TaskInstance> ReadListfile(const std::filesystem::path& path,
                                       Task task, const EpisodeStore& store);
TaskSplit LoadTask(const std::filesystem::path& root, Task task,
                   const EpisodeStore& store);

void WriteSplit(const SplitManifest& manifest, const std::filesystem::path& path);
SplitManifest ReadSplit(const std::filesystem::path& path);

}  // namespace icubench

#endif  // ICUBENCH_DATASET_H_
