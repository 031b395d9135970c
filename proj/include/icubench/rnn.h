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

#ifndef ICUBENCH_RNN_H_
#define ICUBENCH_RNN_H_

#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "icubench/core.h"
#include "icubench/discretizer.h"
#include "icubench/ndiff.h"

namespace icubench {

// Parameter indices of one LSTM layer inside a ParamStore. Weights multiply
// row vectors from the right: W_x* is in x hidden, W_h* is hidden x hidden,
// biases are 1 x hidden. There are no peephole weights. The input and forget
// gates carry biases only when `gate_bias` is set.
struct LstmParams {
  int in = 0;
  int hidden = 0;
  bool gate_bias = false;
  int w_xi = -1, w_hi = -1, w_xf = -1, w_hf = -1, w_xc = -1, w_hc = -1, b_c = -1;
  int w_xo = -1, w_ho = -1, b_o = -1;
  int b_i = -1, b_f = -1;
};

// Registers "<prefix>/W_xi" ... "<prefix>/b_o" drawn from uniform(+-1/sqrt(hidden)).
LstmParams AddLstmParams(nd::ParamStore& store, const std::string& prefix, int in,
                         int hidden, bool gate_bias, std::mt19937_64& rng);

// Plain matrices of one layer, gates stacked [i f c o] along columns.
struct LstmWeights {
  nd::Matrix wx;  // in x 4H
  nd::Matrix wh;  // H x 4H
  Eigen::RowVectorXd b;  // 1 x 4H
  int hidden() const { return static_cast<int>(wh.rows()); }
};
LstmWeights GatherLstmWeights(const nd::ParamStore& store, const LstmParams& p);

// One cell application on a batch: updates h and c (batch x H) in place.
void LstmStep(const LstmWeights& w, const nd::Matrix& x, nd::Matrix& h, nd::Matrix& c);

// Runs the layer over a time-major (T * batch) x in sequence from zero state
// and returns the (T * batch) x hidden outputs.
nd::Var LstmForward(nd::Tape& tape, nd::ParamStore& store, const LstmParams& p,
                    const nd::Var& x, int batch);

// Reverses each sequence of a time-major batch within its own length; padded
// steps stay in place. Applying it twice is the identity.
nd::Var ReverseTime(const nd::Var& x, int batch, std::span<const int> lengths);

// [forward; re-reversed backward] outputs, (T * batch) x 2H.
nd::Var BiLstmForward(nd::Tape& tape, nd::ParamStore& store, const LstmParams& fwd,
                      const LstmParams& bwd, const nd::Var& x, int batch,
                      std::span<const int> lengths);

// Per-variable recurrent layers of the channel-wise model.
struct ChannelParams {
  LstmParams fwd;
  LstmParams bwd;  // unused when unidirectional
  bool bidirectional = true;
  int width() const { return bidirectional ? 2 * fwd.hidden : fwd.hidden; }
};

// u_t: the per-variable outputs concatenated in stream order. Throws
// ShapeError unless there is one stream per channel.
nd::Var ChannelwiseForward(nd::Tape& tape, nd::ParamStore& store,
                           std::span<const ChannelParams> channels,
                           std::span<const nd::Var> streams, int batch,
                           std::span<const int> lengths);

enum class Arch { kStandard, kChannelwise };
const char* ArchName(Arch arch);
Arch ParseArch(std::string_view name);

struct ModelSpec {
  Arch arch = Arch::kStandard;
  int layers = 1;
  int hidden = 16;
  int channel_units = 4;
  double dropout = 0.0;
  // Standard: every layer below the top one runs in both directions.
  // Channel-wise: the per-variable layers run in both directions.
  bool bidirectional = false;
  bool deep_supervision = false;
  bool multitask = false;
  Task task = Task::kIhm;  // single-task head
  // LOS head regresses remaining days through a relu instead of the
  // 10-bucket softmax.
  bool raw_los = false;
  bool gate_bias = false;
  std::uint64_t seed = 0;

  // Throws ContractError for bidirectional layers on grouped per-stay
  // training and DomainError for out-of-range sizes.
  void Validate() const;
  bool HasHead(Task t) const { return multitask || task == t; }
  std::string Serialize() const;  // "key: value" lines
};

// One padded, time-major batch of input sequences.
struct SequenceBatch {
  int batch = 0;
  int steps = 0;
  std::vector<int> lengths;
  nd::Matrix x;  // (steps * batch) x input width, zero padded
};

// Stacks the first lengths[b] steps of seqs[b]. Throws ShapeError when a
// sequence is shorter than its length or widths differ.
SequenceBatch MakeBatch(std::span<const DiscretizedSeq* const> seqs,
                        std::span<const int> lengths);

// Per-row head outputs over all (steps * batch) rows; invalid for heads the
// model does not have.
struct ModelOutputs {
  nd::Var hidden;
  nd::Var ihm;     // sigmoid, 1 column
  nd::Var decomp;  // sigmoid, 1 column
  nd::Var los;     // softmax over 10 buckets, or relu days when raw
  nd::Var pheno;   // 25 sigmoids
};

struct ForwardOptions {
  bool training = false;
  std::uint64_t dropout_seed = 0;
};

class SequenceModel {
 public:
  SequenceModel(ModelSpec spec, const VariableTable& variables);

  const ModelSpec& spec() const { return spec_; }
  nd::ParamStore& params() { return store_; }
  const nd::ParamStore& params() const { return store_; }
  // Width of u_t for the channel-wise model.
  int channel_output_width() const;
  const std::vector<ChannelParams>& channels() const { return channels_; }
  const std::vector<LstmParams>& layers() const { return layers_; }

  ModelOutputs Forward(nd::Tape& tape, const SequenceBatch& batch,
                       const ForwardOptions& options = {});

  void Save(const std::filesystem::path& path) const;
  // Throws SchemaError when the file does not match the variable table.
  static SequenceModel Load(const std::filesystem::path& path,
                            const VariableTable& variables);

 private:
  nd::Var Encode(nd::Tape& tape, const SequenceBatch& batch, const ForwardOptions& options);
  nd::Var HeadForward(nd::Tape& tape, const nd::Var& h, int head_w, int head_b);

  ModelSpec spec_;
  VariableTable variables_;
  nd::ParamStore store_;
  std::vector<ChannelParams> channels_;
  std::vector<std::vector<int>> channel_columns_;
  // Standard model: lower (possibly bidirectional) layers then the top
  // layer. Channel-wise model: top layers only.
  std::vector<LstmParams> layers_;
  std::vector<LstmParams> backward_layers_;
  int head_ihm_w_ = -1, head_ihm_b_ = -1;
  int head_decomp_w_ = -1, head_decomp_b_ = -1;
  int head_los_w_ = -1, head_los_b_ = -1;
  int head_pheno_w_ = -1, head_pheno_b_ = -1;
};

}  // namespace icubench

#endif  // ICUBENCH_RNN_H_
