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

#include "icubench/rnn.h"

#include <cmath>
#include <cstdio>
#include <memory>

#include "block_config.h"
#include "icubench/checkpoint.h"
#include "icubench/csv.h"
#include "icubench/error.h"
#include "parallel.h"

namespace icubench {
namespace {

using nd::Matrix;
using nd::Var;

constexpr const char* kRnnFormat = "icubench-rnn";
constexpr int kRnnVersion = 1;

double StableSigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

Matrix Uniform(Eigen::Index rows, Eigen::Index cols, double bound, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
  return m;
}

// Gate pre-activations [i f c o] for one step.
Matrix GateInputs(const Matrix& wx, const Matrix& wh, const Eigen::RowVectorXd& b,
                  const Matrix& x, const Matrix& h) {
  Matrix g = x * wx;
  g.noalias() += h * wh;
  g.rowwise() += b;
  return g;
}

// Applies the gate nonlinearities in place and advances (h, c). On return
// `tanh_c` holds tanh of the new cell state.
void CellUpdate(Matrix& gates, Matrix& h, Matrix& c, Matrix& tanh_c) {
  const Eigen::Index n = h.cols();
  gates.leftCols(2 * n) = gates.leftCols(2 * n).unaryExpr(&StableSigmoid);
  gates.middleCols(2 * n, n) = gates.middleCols(2 * n, n).array().tanh().matrix();
  gates.rightCols(n) = gates.rightCols(n).unaryExpr(&StableSigmoid);
  c = (gates.middleCols(n, n).array() * c.array() +
       gates.leftCols(n).array() * gates.middleCols(2 * n, n).array())
          .matrix();
  tanh_c = c.array().tanh().matrix();
  h = (gates.rightCols(n).array() * tanh_c.array()).matrix();
}

Var LeafOrZeros(nd::Tape& tape, nd::ParamStore& store, int index, int hidden) {
  return index >= 0 ? tape.Param(store, index) : tape.Constant(Matrix::Zero(1, hidden));
}

// The fused layer node: x is (T * batch) x in; returns (T * batch) x hidden.
Var FusedLstm(const Var& x, const Var& wx, const Var& wh, const Var& b, int batch) {
  nd::Tape& tape = *x.tape();
  const Eigen::Index hidden = wh.rows();
  if (batch <= 0 || x.rows() % batch != 0) {
    throw ShapeError("lstm: " + std::to_string(x.rows()) +
                     " rows do not split into batches of " + std::to_string(batch));
  }
  if (wx.rows() != x.cols() || wx.cols() != 4 * hidden || wh.cols() != 4 * hidden ||
      b.rows() != 1 || b.cols() != 4 * hidden) {
    throw ShapeError("lstm: input " + nd::ShapeString(x.value()) + ", W_x " +
                     nd::ShapeString(wx.value()) + ", W_h " + nd::ShapeString(wh.value()) +
                     ", b " + nd::ShapeString(b.value()));
  }
  const int steps = static_cast<int>(x.rows() / batch);
  struct Cache {
    Matrix gates;   // activated [i f g o], (T * batch) x 4H
    Matrix cell;    // (T * batch) x H
    Matrix tanh_c;  // (T * batch) x H
  };
  auto cache = std::make_shared<Cache>();
  cache->gates.resize(x.rows(), 4 * hidden);
  cache->cell.resize(x.rows(), hidden);
  cache->tanh_c.resize(x.rows(), hidden);
  Matrix out(x.rows(), hidden);
  Matrix h = Matrix::Zero(batch, hidden);
  Matrix c = Matrix::Zero(batch, hidden);
  Matrix tanh_c;
  const Eigen::RowVectorXd bias = b.value().row(0);
  for (int t = 0; t < steps; ++t) {
    const Eigen::Index r = static_cast<Eigen::Index>(t) * batch;
    Matrix gates = GateInputs(wx.value(), wh.value(), bias, x.value().middleRows(r, batch), h);
    CellUpdate(gates, h, c, tanh_c);
    cache->gates.middleRows(r, batch) = gates;
    cache->cell.middleRows(r, batch) = c;
    cache->tanh_c.middleRows(r, batch) = tanh_c;
    out.middleRows(r, batch) = h;
  }
  const int self = static_cast<int>(tape.size());
  return tape.Record(
      std::move(out), {x, wx, wh, b},
      [x, wx, wh, b, batch, steps, hidden, self, cache](nd::Tape& t, const Matrix& grad) {
        const Matrix& hs = t.value(self);
        const Matrix& xs = x.value();
        const bool need_x = t.RequiresGrad(x);
        Matrix dwx = Matrix::Zero(wx.rows(), wx.cols());
        Matrix dwh = Matrix::Zero(wh.rows(), wh.cols());
        Matrix db = Matrix::Zero(1, 4 * hidden);
        Matrix dx = need_x ? Matrix(xs.rows(), xs.cols()) : Matrix();
        Matrix dh_next = Matrix::Zero(batch, hidden);
        Matrix dc_next = Matrix::Zero(batch, hidden);
        Matrix dgates(batch, 4 * hidden);
        for (int step = steps - 1; step >= 0; --step) {
          const Eigen::Index r = static_cast<Eigen::Index>(step) * batch;
          const auto gates = cache->gates.middleRows(r, batch);
          const auto ig = gates.leftCols(hidden).array();
          const auto fg = gates.middleCols(hidden, hidden).array();
          const auto gg = gates.middleCols(2 * hidden, hidden).array();
          const auto og = gates.rightCols(hidden).array();
          const auto tc = cache->tanh_c.middleRows(r, batch).array();
          const Matrix dh = grad.middleRows(r, batch) + dh_next;
          const Matrix dc =
              (dh.array() * og * (1.0 - tc.square()) + dc_next.array()).matrix();
          const Matrix c_prev = step > 0 ? Matrix(cache->cell.middleRows(r - batch, batch))
                                         : Matrix::Zero(batch, hidden);
          dgates.leftCols(hidden) = (dc.array() * gg * ig * (1.0 - ig)).matrix();
          dgates.middleCols(hidden, hidden) =
              (dc.array() * c_prev.array() * fg * (1.0 - fg)).matrix();
          dgates.middleCols(2 * hidden, hidden) =
              (dc.array() * ig * (1.0 - gg.square())).matrix();
          dgates.rightCols(hidden) = (dh.array() * tc * og * (1.0 - og)).matrix();
          dc_next = (dc.array() * fg).matrix();
          dwx.noalias() += xs.middleRows(r, batch).transpose() * dgates;
          if (step > 0) dwh.noalias() += hs.middleRows(r - batch, batch).transpose() * dgates;
          db += dgates.colwise().sum();
          if (need_x) dx.middleRows(r, batch).noalias() = dgates * wx.value().transpose();
          dh_next.noalias() = dgates * wh.value().transpose();
        }
        if (need_x) t.AccumulateGrad(x, dx);
        t.AccumulateGrad(wx, dwx);
        t.AccumulateGrad(wh, dwh);
        t.AccumulateGrad(b, db);
      });
}

Var HeadActivation(const Var& z, Task task, bool raw_los) {
  switch (task) {
    case Task::kLos:
      return raw_los ? nd::Relu(z) : nd::Softmax(z);
    default:
      return nd::Sigmoid(z);
  }
}

int HeadWidth(Task task, bool raw_los) {
  switch (task) {
    case Task::kLos:
      return raw_los ? 1 : kNumLosBuckets;
    case Task::kPheno:
      return kNumPhenotypes;
    default:
      return 1;
  }
}

std::vector<std::pair<std::string, std::string>> SpecFields(const ModelSpec& spec) {
  return {{"arch", ArchName(spec.arch)},
          {"layers", std::to_string(spec.layers)},
          {"hidden", std::to_string(spec.hidden)},
          {"channel_units", std::to_string(spec.channel_units)},
          {"dropout", FormatDouble(spec.dropout)},
          {"bidirectional", spec.bidirectional ? "1" : "0"},
          {"deep_supervision", spec.deep_supervision ? "1" : "0"},
          {"multitask", spec.multitask ? "1" : "0"},
          {"task", TaskName(spec.task)},
          {"raw_los", spec.raw_los ? "1" : "0"},
          {"gate_bias", spec.gate_bias ? "1" : "0"},
          {"seed", std::to_string(spec.seed)}};
}

ModelSpec SpecFromCheckpoint(const Checkpoint& ckpt) {
  const auto flag = [&](const char* key) {
    const auto& v = ckpt.Get(key);
    if (v != "0" && v != "1") throw SchemaError(std::string("bad flag ") + key);
    return v == "1";
  };
  ModelSpec spec;
  spec.arch = ParseArch(ckpt.Get("arch"));
  spec.layers = static_cast<int>(ckpt.GetInt("layers"));
  spec.hidden = static_cast<int>(ckpt.GetInt("hidden"));
  spec.channel_units = static_cast<int>(ckpt.GetInt("channel_units"));
  spec.dropout = ckpt.GetDouble("dropout");
  spec.bidirectional = flag("bidirectional");
  spec.deep_supervision = flag("deep_supervision");
  spec.multitask = flag("multitask");
  spec.task = ParseTask(ckpt.Get("task"));
  spec.raw_los = flag("raw_los");
  spec.gate_bias = flag("gate_bias");
  spec.seed = std::stoull(ckpt.Get("seed"));
  return spec;
}

}  // namespace

LstmParams AddLstmParams(nd::ParamStore& store, const std::string& prefix, int in,
                         int hidden, bool gate_bias, std::mt19937_64& rng) {
  if (in <= 0 || hidden <= 0) throw DomainError("lstm dimensions must be positive");
  const double bound = 1.0 / std::sqrt(static_cast<double>(hidden));
  LstmParams p;
  p.in = in;
  p.hidden = hidden;
  p.gate_bias = gate_bias;
  const auto add = [&](const char* name, Eigen::Index rows) {
    return store.Add(prefix + "/" + name, Uniform(rows, hidden, bound, rng));
  };
  p.w_xi = add("W_xi", in);
  p.w_hi = add("W_hi", hidden);
  p.w_xf = add("W_xf", in);
  p.w_hf = add("W_hf", hidden);
  p.w_xc = add("W_xc", in);
  p.w_hc = add("W_hc", hidden);
  p.b_c = add("b_c", 1);
  p.w_xo = add("W_xo", in);
  p.w_ho = add("W_ho", hidden);
  p.b_o = add("b_o", 1);
  if (gate_bias) {
    p.b_i = add("b_i", 1);
    p.b_f = add("b_f", 1);
  }
  return p;
}

LstmWeights GatherLstmWeights(const nd::ParamStore& store, const LstmParams& p) {
  const int h = p.hidden;
  LstmWeights w;
  w.wx.resize(p.in, 4 * h);
  w.wx << store.value(p.w_xi), store.value(p.w_xf), store.value(p.w_xc), store.value(p.w_xo);
  w.wh.resize(h, 4 * h);
  w.wh << store.value(p.w_hi), store.value(p.w_hf), store.value(p.w_hc), store.value(p.w_ho);
  w.b = Eigen::RowVectorXd::Zero(4 * h);
  if (p.b_i >= 0) w.b.segment(0, h) = store.value(p.b_i).row(0);
  if (p.b_f >= 0) w.b.segment(h, h) = store.value(p.b_f).row(0);
  w.b.segment(2 * h, h) = store.value(p.b_c).row(0);
  w.b.segment(3 * h, h) = store.value(p.b_o).row(0);
  return w;
}

void LstmStep(const LstmWeights& w, const Matrix& x, Matrix& h, Matrix& c) {
  if (x.cols() != w.wx.rows() || h.cols() != w.hidden() || c.cols() != w.hidden() ||
      h.rows() != x.rows() || c.rows() != x.rows()) {
    throw ShapeError("lstm step: x " + nd::ShapeString(x) + ", h " + nd::ShapeString(h) +
                     ", c " + nd::ShapeString(c));
  }
  Matrix gates = GateInputs(w.wx, w.wh, w.b, x, h);
  Matrix tanh_c;
  CellUpdate(gates, h, c, tanh_c);
}

Var LstmForward(nd::Tape& tape, nd::ParamStore& store, const LstmParams& p, const Var& x,
                int batch) {
  const std::vector<Var> wx = {tape.Param(store, p.w_xi), tape.Param(store, p.w_xf),
                               tape.Param(store, p.w_xc), tape.Param(store, p.w_xo)};
  const std::vector<Var> wh = {tape.Param(store, p.w_hi), tape.Param(store, p.w_hf),
                               tape.Param(store, p.w_hc), tape.Param(store, p.w_ho)};
  const std::vector<Var> b = {LeafOrZeros(tape, store, p.b_i, p.hidden),
                              LeafOrZeros(tape, store, p.b_f, p.hidden),
                              tape.Param(store, p.b_c), tape.Param(store, p.b_o)};
  return FusedLstm(x, nd::Concat(wx), nd::Concat(wh), nd::Concat(b), batch);
}

Var ReverseTime(const Var& x, int batch, std::span<const int> lengths) {
  if (batch <= 0 || x.rows() % batch != 0 || lengths.size() != static_cast<size_t>(batch)) {
    throw ShapeError("reverse time: " + nd::ShapeString(x.value()) + " with batch " +
                     std::to_string(batch) + " and " + std::to_string(lengths.size()) +
                     " lengths");
  }
  const int steps = static_cast<int>(x.rows() / batch);
  std::vector<Eigen::Index> rows(static_cast<size_t>(x.rows()));
  for (int b = 0; b < batch; ++b) {
    const int len = lengths[b];
    if (len < 1 || len > steps) throw ShapeError("reverse time: bad sequence length");
    for (int t = 0; t < steps; ++t) {
      const int src = t < len ? len - 1 - t : t;
      rows[static_cast<size_t>(t) * batch + b] = static_cast<Eigen::Index>(src) * batch + b;
    }
  }
  return nd::GatherRows(x, rows);
}

Var BiLstmForward(nd::Tape& tape, nd::ParamStore& store, const LstmParams& fwd,
                  const LstmParams& bwd, const Var& x, int batch,
                  std::span<const int> lengths) {
  const Var forward = LstmForward(tape, store, fwd, x, batch);
  const Var reversed = LstmForward(tape, store, bwd, ReverseTime(x, batch, lengths), batch);
  const Var parts[] = {forward, ReverseTime(reversed, batch, lengths)};
  return nd::Concat(parts);
}

Var ChannelwiseForward(nd::Tape& tape, nd::ParamStore& store,
                       std::span<const ChannelParams> channels, std::span<const Var> streams,
                       int batch, std::span<const int> lengths) {
  if (channels.size() != streams.size()) {
    throw ShapeError("channel-wise: " + std::to_string(streams.size()) + " streams for " +
                     std::to_string(channels.size()) + " channels");
  }
  std::vector<Var> outputs;
  outputs.reserve(channels.size());
  for (size_t i = 0; i < channels.size(); ++i) {
    const auto& ch = channels[i];
    outputs.push_back(ch.bidirectional
                          ? BiLstmForward(tape, store, ch.fwd, ch.bwd, streams[i], batch, lengths)
                          : LstmForward(tape, store, ch.fwd, streams[i], batch));
  }
  return nd::Concat(outputs);
}

const char* ArchName(Arch arch) {
  return arch == Arch::kChannelwise ? "channelwise" : "standard";
}

Arch ParseArch(std::string_view name) {
  if (name == "standard" || name == "lstm") return Arch::kStandard;
  if (name == "channelwise") return Arch::kChannelwise;
  throw DomainError("unknown architecture '" + std::string(name) + "'");
}

void ModelSpec::Validate() const {
  if (bidirectional && (deep_supervision || multitask)) {
    throw ContractError(
        "bidirectional layers are not allowed when a stay's predictions are grouped "
        "(deep supervision or multitask)");
  }
  if (layers < 1 || layers > 2) throw DomainError("layers must be 1 or 2");
  if (hidden < 1) throw DomainError("hidden units must be positive");
  if (arch == Arch::kChannelwise && channel_units < 1) {
    throw DomainError("channel units must be positive");
  }
  if (!(dropout >= 0.0 && dropout <= 1.0)) throw DomainError("dropout must lie in [0, 1]");
}

std::string ModelSpec::Serialize() const {
  std::string out;
  for (const auto& [k, v] : SpecFields(*this)) out += k + ": " + v + "\n";
  return out;
}

SequenceBatch MakeBatch(std::span<const DiscretizedSeq* const> seqs,
                        std::span<const int> lengths) {
  if (seqs.empty() || seqs.size() != lengths.size()) {
    throw ShapeError("batch needs one length per sequence");
  }
  SequenceBatch batch;
  batch.batch = static_cast<int>(seqs.size());
  batch.lengths.assign(lengths.begin(), lengths.end());
  const Eigen::Index width = seqs[0]->x.cols();
  for (size_t b = 0; b < seqs.size(); ++b) {
    if (lengths[b] < 1 || lengths[b] > seqs[b]->steps() || seqs[b]->x.cols() != width) {
      throw ShapeError("batch item " + std::to_string(b) + ": length " +
                       std::to_string(lengths[b]) + " for sequence " +
                       nd::ShapeString(seqs[b]->x));
    }
    batch.steps = std::max(batch.steps, lengths[b]);
  }
  batch.x = Matrix::Zero(static_cast<Eigen::Index>(batch.steps) * batch.batch, width);
  for (int b = 0; b < batch.batch; ++b) {
    for (int t = 0; t < lengths[b]; ++t) {
      batch.x.row(static_cast<Eigen::Index>(t) * batch.batch + b) = seqs[b]->x.row(t);
    }
  }
  return batch;
}

SequenceModel::SequenceModel(ModelSpec spec, const VariableTable& variables)
    : spec_(spec), variables_(variables) {
  spec_.Validate();
  std::mt19937_64 rng(spec_.seed);
  const int input = variables_.input_dims();
  int top_in = input;
  if (spec_.arch == Arch::kChannelwise) {
    for (int v = 0; v < variables_.size(); ++v) {
      channel_columns_.push_back(ChannelColumns(variables_, v));
      char prefix[32];
      std::snprintf(prefix, sizeof prefix, "channel%02d", v);
      ChannelParams ch;
      ch.bidirectional = spec_.bidirectional;
      const int width = static_cast<int>(channel_columns_.back().size());
      ch.fwd = AddLstmParams(store_, std::string(prefix) + "/fwd", width, spec_.channel_units,
                             spec_.gate_bias, rng);
      if (ch.bidirectional) {
        ch.bwd = AddLstmParams(store_, std::string(prefix) + "/bwd", width,
                               spec_.channel_units, spec_.gate_bias, rng);
      }
      channels_.push_back(ch);
    }
    top_in = channel_output_width();
    for (int l = 0; l < spec_.layers; ++l) {
      layers_.push_back(AddLstmParams(store_, "top" + std::to_string(l),
                                      l == 0 ? top_in : spec_.hidden, spec_.hidden,
                                      spec_.gate_bias, rng));
    }
  } else {
    int in = input;
    for (int l = 0; l < spec_.layers; ++l) {
      const bool top = l == spec_.layers - 1;
      const std::string prefix = "lstm" + std::to_string(l);
      layers_.push_back(AddLstmParams(store_, prefix, in, spec_.hidden, spec_.gate_bias, rng));
      if (spec_.bidirectional && !top) {
        backward_layers_.push_back(
            AddLstmParams(store_, prefix + "_bwd", in, spec_.hidden, spec_.gate_bias, rng));
        in = 2 * spec_.hidden;
      } else {
        in = spec_.hidden;
      }
    }
  }
  const double bound = 1.0 / std::sqrt(static_cast<double>(spec_.hidden));
  const auto add_head = [&](Task task, const char* name, int& w, int& b) {
    if (!spec_.HasHead(task)) return;
    const int width = HeadWidth(task, spec_.raw_los);
    w = store_.Add(std::string("head/") + name + "/W", Uniform(spec_.hidden, width, bound, rng));
    b = store_.Add(std::string("head/") + name + "/b", Uniform(1, width, bound, rng));
  };
  add_head(Task::kIhm, "ihm", head_ihm_w_, head_ihm_b_);
  add_head(Task::kDecomp, "decomp", head_decomp_w_, head_decomp_b_);
  add_head(Task::kLos, "los", head_los_w_, head_los_b_);
  add_head(Task::kPheno, "pheno", head_pheno_w_, head_pheno_b_);
}

int SequenceModel::channel_output_width() const {
  int width = 0;
  for (const auto& ch : channels_) width += ch.width();
  return width;
}

Var SequenceModel::Encode(nd::Tape& tape, const SequenceBatch& batch,
                          const ForwardOptions& options) {
  if (batch.x.cols() != variables_.input_dims()) {
    throw ShapeError("model expects " + std::to_string(variables_.input_dims()) +
                     " input columns, got " + nd::ShapeString(batch.x));
  }
  std::uint64_t dropout_stream = 0;
  const auto dropout = [&](const Var& v) {
    return nd::Dropout(v, spec_.dropout,
                       internal::StreamSeed(options.dropout_seed, dropout_stream++),
                       options.training);
  };
  Var h;
  if (spec_.arch == Arch::kChannelwise) {
    std::vector<Var> streams;
    streams.reserve(channels_.size());
    for (const auto& cols : channel_columns_) {
      Matrix s(batch.x.rows(), static_cast<Eigen::Index>(cols.size()));
      for (size_t k = 0; k < cols.size(); ++k) s.col(static_cast<Eigen::Index>(k)) = batch.x.col(cols[k]);
      streams.push_back(tape.Constant(std::move(s)));
    }
    h = ChannelwiseForward(tape, store_, channels_, streams, batch.batch, batch.lengths);
    for (const auto& layer : layers_) {
      h = LstmForward(tape, store_, layer, dropout(h), batch.batch);
    }
  } else {
    h = tape.Constant(batch.x);
    for (size_t l = 0; l < layers_.size(); ++l) {
      if (l > 0) h = dropout(h);
      h = l < backward_layers_.size()
              ? BiLstmForward(tape, store_, layers_[l], backward_layers_[l], h, batch.batch,
                              batch.lengths)
              : LstmForward(tape, store_, layers_[l], h, batch.batch);
    }
  }
  return dropout(h);
}

Var SequenceModel::HeadForward(nd::Tape& tape, const Var& h, int head_w, int head_b) {
  return nd::Add(nd::MatMul(h, tape.Param(store_, head_w)), tape.Param(store_, head_b));
}

ModelOutputs SequenceModel::Forward(nd::Tape& tape, const SequenceBatch& batch,
                                    const ForwardOptions& options) {
  ModelOutputs out;
  out.hidden = Encode(tape, batch, options);
  const auto head = [&](Task task, int w, int b) {
    return w >= 0 ? HeadActivation(HeadForward(tape, out.hidden, w, b), task, spec_.raw_los)
                  : Var();
  };
  out.ihm = head(Task::kIhm, head_ihm_w_, head_ihm_b_);
  out.decomp = head(Task::kDecomp, head_decomp_w_, head_decomp_b_);
  out.los = head(Task::kLos, head_los_w_, head_los_b_);
  out.pheno = head(Task::kPheno, head_pheno_w_, head_pheno_b_);
  return out;
}

void SequenceModel::Save(const std::filesystem::path& path) const {
  Checkpoint ckpt;
  ckpt.format = kRnnFormat;
  ckpt.version = kRnnVersion;
  for (auto& [k, v] : SpecFields(spec_)) ckpt.Set(k, v);
  ckpt.Set("variables", std::to_string(variables_.size()));
  ckpt.Set("input_dims", std::to_string(variables_.input_dims()));
  for (int i = 0; i < store_.size(); ++i) {
    ckpt.tensors.emplace_back(store_.name(i), store_.value(i));
  }
  WriteCheckpoint(ckpt, path);
}

SequenceModel SequenceModel::Load(const std::filesystem::path& path,
                                  const VariableTable& variables) {
  const auto ckpt = ReadCheckpoint(path, kRnnFormat, kRnnVersion);
  if (ckpt.GetInt("variables") != variables.size() ||
      ckpt.GetInt("input_dims") != variables.input_dims()) {
    throw SchemaError(path.string() + ": model was trained on a different variable layout");
  }
  SequenceModel model(SpecFromCheckpoint(ckpt), variables);
  if (static_cast<int>(ckpt.tensors.size()) != model.store_.size()) {
    throw SchemaError(path.string() + ": tensor count does not match the model spec");
  }
  for (int i = 0; i < model.store_.size(); ++i) {
    const auto& [name, value] = ckpt.tensors[static_cast<size_t>(i)];
    if (name != model.store_.name(i) || value.rows() != model.store_.value(i).rows() ||
        value.cols() != model.store_.value(i).cols()) {
      throw SchemaError(path.string() + ": tensor '" + name + "' does not match '" +
                        model.store_.name(i) + "' " +
                        nd::ShapeString(model.store_.value(i)));
    }
    model.store_.value(i) = value;
  }
  return model;
}

}  // namespace icubench
