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

#include "icubench/ndiff.h"

#include <algorithm>
#include <cmath>
#include <random>

#include "icubench/error.h"

namespace icubench::nd {
namespace {

[[noreturn]] void ThrowShape(const char* op, const Matrix& a, const Matrix& b) {
  throw ShapeError(std::string(op) + ": incompatible shapes " + ShapeString(a) +
                   " and " + ShapeString(b));
}

Tape& SameTape(const Var& a, const Var& b, const char* op) {
  if (!a.valid() || !b.valid() || a.tape() != b.tape()) {
    throw ContractError(std::string(op) + ": operands belong to different tapes");
  }
  return *a.tape();
}

bool Clamped(double p) { return p < kProbEpsilon || p > 1.0 - kProbEpsilon; }

double ClampProb(double p) { return std::clamp(p, kProbEpsilon, 1.0 - kProbEpsilon); }

}  // namespace

std::string ShapeString(const Matrix& m) {
  return "[" + std::to_string(m.rows()) + " x " + std::to_string(m.cols()) + "]";
}

int ParamStore::Add(std::string name, Matrix value) {
  if (index_.contains(name)) {
    throw ContractError("duplicate parameter name '" + name + "'");
  }
  const int id = size();
  index_.emplace(name, id);
  names_.push_back(std::move(name));
  grads_.push_back(Matrix::Zero(value.rows(), value.cols()));
  values_.push_back(std::move(value));
  return id;
}

int ParamStore::Find(const std::string& name) const {
  const auto it = index_.find(name);
  return it == index_.end() ? -1 : it->second;
}

void ParamStore::ZeroGrad() {
  for (auto& g : grads_) g.setZero();
}

std::int64_t ParamStore::TotalSize() const {
  std::int64_t total = 0;
  for (const auto& v : values_) total += v.size();
  return total;
}

const Matrix& Var::value() const { return tape_->value(id_); }

Matrix Var::grad() const { return tape_->grad(id_); }

Var Tape::Constant(Matrix value) {
  Node node;
  node.value = std::move(value);
  nodes_.push_back(std::move(node));
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Tape::Param(ParamStore& store, int index) {
  Node node;
  node.value = store.value(index);
  node.requires_grad = true;
  node.store = &store;
  node.param = index;
  nodes_.push_back(std::move(node));
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Tape::Record(Matrix value, std::initializer_list<Var> parents, BackwardFn backward) {
  return Record(std::move(value), std::span<const Var>(parents.begin(), parents.size()),
                std::move(backward));
}

Var Tape::Record(Matrix value, std::span<const Var> parents, BackwardFn backward) {
  if (backward_done_) throw ContractError("tape already differentiated");
  Node node;
  node.value = std::move(value);
  node.requires_grad = std::any_of(parents.begin(), parents.end(),
                                   [this](const Var& p) { return RequiresGrad(p); });
  if (node.requires_grad) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Matrix& Tape::GradSlot(int id) {
  Node& node = nodes_[id];
  if (node.grad.size() == 0 && node.value.size() != 0) {
    node.grad = Matrix::Zero(node.value.rows(), node.value.cols());
  }
  return node.grad;
}

void Tape::AccumulateGrad(const Var& v, const Matrix& g) {
  if (!nodes_[v.id()].requires_grad) return;
  GradSlot(v.id()) += g;
}

void Tape::AccumulateGradBlock(const Var& v, Eigen::Index row, Eigen::Index col,
                               const Matrix& g) {
  if (!nodes_[v.id()].requires_grad) return;
  GradSlot(v.id()).block(row, col, g.rows(), g.cols()) += g;
}

Matrix Tape::grad(int id) const {
  const Node& node = nodes_[id];
  if (node.grad.size() == 0) return Matrix::Zero(node.value.rows(), node.value.cols());
  return node.grad;
}

void Tape::Backward(const Var& root) {
  if (root.tape() != this) throw ContractError("backward: root is on another tape");
  if (backward_done_) throw ContractError("backward called twice on one tape");
  const Matrix& value = nodes_[root.id()].value;
  if (value.rows() != 1 || value.cols() != 1) {
    throw ShapeError("backward: root must be scalar, got " + ShapeString(value));
  }
  backward_done_ = true;
  if (!nodes_[root.id()].requires_grad) return;
  GradSlot(root.id())(0, 0) = 1.0;
  for (int id = root.id(); id >= 0; --id) {
    Node& node = nodes_[id];
    if (node.grad.size() == 0) continue;
    if (node.store != nullptr) {
      node.store->grad(node.param) += node.grad;
    } else if (node.backward) {
      node.backward(*this, node.grad);
    }
  }
}

Var MatMul(const Var& a, const Var& b) {
  Tape& tape = SameTape(a, b, "matmul");
  if (a.cols() != b.rows()) ThrowShape("matmul", a.value(), b.value());
  Matrix out = a.value() * b.value();
  return tape.Record(std::move(out), {a, b}, [a, b](Tape& t, const Matrix& g) {
    if (t.RequiresGrad(a)) t.AccumulateGrad(a, g * b.value().transpose());
    if (t.RequiresGrad(b)) t.AccumulateGrad(b, a.value().transpose() * g);
  });
}

namespace {

Var AddImpl(const Var& a, const Var& b, double sign, const char* op) {
  Tape& tape = SameTape(a, b, op);
  const bool broadcast = b.rows() == 1 && a.rows() != 1 && a.cols() == b.cols();
  if (!broadcast && (a.rows() != b.rows() || a.cols() != b.cols())) {
    ThrowShape(op, a.value(), b.value());
  }
  Matrix out = a.value();
  if (broadcast) {
    out.rowwise() += sign * b.value().row(0);
  } else {
    out += sign * b.value();
  }
  return tape.Record(std::move(out), {a, b},
                     [a, b, sign, broadcast](Tape& t, const Matrix& g) {
                       t.AccumulateGrad(a, g);
                       if (!t.RequiresGrad(b)) return;
                       if (broadcast) {
                         t.AccumulateGrad(b, sign * g.colwise().sum());
                       } else {
                         t.AccumulateGrad(b, sign * g);
                       }
                     });
}

}  // namespace

Var Add(const Var& a, const Var& b) { return AddImpl(a, b, 1.0, "add"); }

Var Sub(const Var& a, const Var& b) { return AddImpl(a, b, -1.0, "sub"); }

Var Mul(const Var& a, const Var& b) {
  Tape& tape = SameTape(a, b, "mul");
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    ThrowShape("mul", a.value(), b.value());
  }
  Matrix out = a.value().cwiseProduct(b.value());
  return tape.Record(std::move(out), {a, b}, [a, b](Tape& t, const Matrix& g) {
    if (t.RequiresGrad(a)) t.AccumulateGrad(a, g.cwiseProduct(b.value()));
    if (t.RequiresGrad(b)) t.AccumulateGrad(b, g.cwiseProduct(a.value()));
  });
}

Var Scale(const Var& a, double factor) {
  return a.tape()->Record(a.value() * factor, {a}, [a, factor](Tape& t, const Matrix& g) {
    t.AccumulateGrad(a, g * factor);
  });
}

Var Sigmoid(const Var& a) {
  Matrix out = a.value().unaryExpr([](double x) {
    // Split by sign so exp never overflows.
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
  });
  Tape& tape = *a.tape();
  const int self = static_cast<int>(tape.size());
  return tape.Record(std::move(out), {a}, [a, self](Tape& t, const Matrix& g) {
    const Matrix& s = t.value(self);
    t.AccumulateGrad(a, g.cwiseProduct(s.cwiseProduct((1.0 - s.array()).matrix())));
  });
}

Var Tanh(const Var& a) {
  Matrix out = a.value().array().tanh().matrix();
  Tape& tape = *a.tape();
  const int self = static_cast<int>(tape.size());
  return tape.Record(std::move(out), {a}, [a, self](Tape& t, const Matrix& g) {
    const Matrix& y = t.value(self);
    t.AccumulateGrad(a, (g.array() * (1.0 - y.array().square())).matrix());
  });
}

Var Relu(const Var& a) {
  Matrix out = a.value().cwiseMax(0.0);
  return a.tape()->Record(std::move(out), {a}, [a](Tape& t, const Matrix& g) {
    t.AccumulateGrad(a, (a.value().array() > 0.0).select(g, 0.0).matrix());
  });
}

Var Softmax(const Var& a) {
  Matrix out(a.rows(), a.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    const double max = a.value().row(i).maxCoeff();
    out.row(i) = (a.value().row(i).array() - max).exp().matrix();
    out.row(i) /= out.row(i).sum();
  }
  Tape& tape = *a.tape();
  const int self = static_cast<int>(tape.size());
  return tape.Record(std::move(out), {a}, [a, self](Tape& t, const Matrix& g) {
    const Matrix& s = t.value(self);
    const Eigen::VectorXd dot = g.cwiseProduct(s).rowwise().sum();
    Matrix grad = g;
    grad.colwise() -= dot;
    t.AccumulateGrad(a, grad.cwiseProduct(s));
  });
}

Var Concat(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  Tape& tape = *parts.front().tape();
  const Eigen::Index rows = parts.front().rows();
  Eigen::Index cols = 0;
  for (const auto& p : parts) {
    if (p.tape() != &tape) throw ContractError("concat: operands on different tapes");
    if (p.rows() != rows) ThrowShape("concat", parts.front().value(), p.value());
    cols += p.cols();
  }
  Matrix out(rows, cols);
  Eigen::Index offset = 0;
  for (const auto& p : parts) {
    out.middleCols(offset, p.cols()) = p.value();
    offset += p.cols();
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  return tape.Record(std::move(out), parts, [inputs](Tape& t, const Matrix& g) {
    Eigen::Index offset = 0;
    for (const auto& p : inputs) {
      if (t.RequiresGrad(p)) t.AccumulateGrad(p, g.middleCols(offset, p.cols()));
      offset += p.cols();
    }
  });
}

Var SliceCols(const Var& a, Eigen::Index begin, Eigen::Index width) {
  if (begin < 0 || width < 0 || begin + width > a.cols()) {
    throw ShapeError("slice_cols: columns [" + std::to_string(begin) + ", " +
                     std::to_string(begin + width) + ") outside " +
                     ShapeString(a.value()));
  }
  Matrix out = a.value().middleCols(begin, width);
  return a.tape()->Record(std::move(out), {a}, [a, begin](Tape& t, const Matrix& g) {
    t.AccumulateGradBlock(a, 0, begin, g);
  });
}

Var ConcatRows(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no inputs");
  Tape& tape = *parts.front().tape();
  const Eigen::Index cols = parts.front().cols();
  Eigen::Index rows = 0;
  for (const auto& p : parts) {
    if (p.tape() != &tape) throw ContractError("concat_rows: operands on different tapes");
    if (p.cols() != cols) ThrowShape("concat_rows", parts.front().value(), p.value());
    rows += p.rows();
  }
  Matrix out(rows, cols);
  Eigen::Index offset = 0;
  for (const auto& p : parts) {
    out.middleRows(offset, p.rows()) = p.value();
    offset += p.rows();
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  return tape.Record(std::move(out), parts, [inputs](Tape& t, const Matrix& g) {
    Eigen::Index offset = 0;
    for (const auto& p : inputs) {
      if (t.RequiresGrad(p)) t.AccumulateGrad(p, g.middleRows(offset, p.rows()));
      offset += p.rows();
    }
  });
}

Var SliceRows(const Var& a, Eigen::Index begin, Eigen::Index count) {
  if (begin < 0 || count < 0 || begin + count > a.rows()) {
    throw ShapeError("slice_rows: rows [" + std::to_string(begin) + ", " +
                     std::to_string(begin + count) + ") outside " +
                     ShapeString(a.value()));
  }
  Matrix out = a.value().middleRows(begin, count);
  return a.tape()->Record(std::move(out), {a}, [a, begin](Tape& t, const Matrix& g) {
    t.AccumulateGradBlock(a, begin, 0, g);
  });
}

Var SliceTime(const Var& a, int t, int batch) {
  if (batch <= 0 || a.rows() % batch != 0) {
    throw ShapeError("slice_time: " + ShapeString(a.value()) +
                     " is not a stack of batches of " + std::to_string(batch));
  }
  return SliceRows(a, static_cast<Eigen::Index>(t) * batch, batch);
}

Var GatherRows(const Var& a, std::span<const Eigen::Index> rows) {
  Matrix out(static_cast<Eigen::Index>(rows.size()), a.cols());
  for (size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] < 0 || rows[i] >= a.rows()) {
      throw ShapeError("gather_rows: row " + std::to_string(rows[i]) + " outside " +
                       ShapeString(a.value()));
    }
    out.row(static_cast<Eigen::Index>(i)) = a.value().row(rows[i]);
  }
  std::vector<Eigen::Index> index(rows.begin(), rows.end());
  return a.tape()->Record(std::move(out), {a}, [a, index](Tape& t, const Matrix& g) {
    Matrix grad = Matrix::Zero(a.rows(), a.cols());
    for (size_t i = 0; i < index.size(); ++i) {
      grad.row(index[i]) += g.row(static_cast<Eigen::Index>(i));
    }
    t.AccumulateGrad(a, grad);
  });
}

Var Dropout(const Var& a, double p, std::uint64_t seed, bool training) {
  if (!(p >= 0.0 && p <= 1.0)) throw DomainError("dropout: p must lie in [0, 1]");
  if (!training || p == 0.0) return a;
  Matrix mask(a.rows(), a.cols());
  if (p == 1.0) {
    mask.setZero();
  } else {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const double keep_scale = 1.0 / (1.0 - p);
    for (Eigen::Index i = 0; i < mask.size(); ++i) {
      mask.data()[i] = u(rng) < p ? 0.0 : keep_scale;
    }
  }
  Matrix out = a.value().cwiseProduct(mask);
  return a.tape()->Record(std::move(out), {a}, [a, mask](Tape& t, const Matrix& g) {
    t.AccumulateGrad(a, g.cwiseProduct(mask));
  });
}

Var Sum(const Var& a) {
  Matrix out(1, 1);
  out(0, 0) = a.value().sum();
  return a.tape()->Record(std::move(out), {a}, [a](Tape& t, const Matrix& g) {
    t.AccumulateGrad(a, Matrix::Constant(a.rows(), a.cols(), g(0, 0)));
  });
}

Var Mean(const Var& a) {
  if (a.value().size() == 0) throw ShapeError("mean: empty input");
  const double n = static_cast<double>(a.value().size());
  Matrix out(1, 1);
  out(0, 0) = a.value().sum() / n;
  return a.tape()->Record(std::move(out), {a}, [a, n](Tape& t, const Matrix& g) {
    t.AccumulateGrad(a, Matrix::Constant(a.rows(), a.cols(), g(0, 0) / n));
  });
}

Var WeightedBinaryCrossEntropy(const Var& probs, const Matrix& targets,
                               const Matrix& weights) {
  const Matrix& p = probs.value();
  if (targets.rows() != p.rows() || targets.cols() != p.cols()) {
    ThrowShape("binary_cross_entropy", p, targets);
  }
  if (weights.rows() != p.rows() || weights.cols() != p.cols()) {
    ThrowShape("binary_cross_entropy", p, weights);
  }
  double loss = 0.0;
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    const double w = weights.data()[i];
    if (w == 0.0) continue;
    const double q = ClampProb(p.data()[i]);
    const double y = targets.data()[i];
    loss -= w * (y * std::log(q) + (1.0 - y) * std::log(1.0 - q));
  }
  Matrix out(1, 1);
  out(0, 0) = loss;
  return probs.tape()->Record(
      std::move(out), {probs}, [probs, targets, weights](Tape& t, const Matrix& g) {
        const Matrix& p = probs.value();
        Matrix grad = Matrix::Zero(p.rows(), p.cols());
        for (Eigen::Index i = 0; i < p.size(); ++i) {
          const double w = weights.data()[i];
          const double q = p.data()[i];
          if (w == 0.0 || Clamped(q)) continue;
          const double y = targets.data()[i];
          grad.data()[i] = g(0, 0) * w * (-y / q + (1.0 - y) / (1.0 - q));
        }
        t.AccumulateGrad(probs, grad);
      });
}

Var WeightedCategoricalCrossEntropy(const Var& probs, std::span<const int> classes,
                                    std::span<const double> weights) {
  const Matrix& p = probs.value();
  if (static_cast<Eigen::Index>(classes.size()) != p.rows() ||
      weights.size() != classes.size()) {
    throw ShapeError("categorical_cross_entropy: " + ShapeString(p) + " with " +
                     std::to_string(classes.size()) + " classes and " +
                     std::to_string(weights.size()) + " weights");
  }
  double loss = 0.0;
  for (size_t i = 0; i < classes.size(); ++i) {
    if (classes[i] < 0 || classes[i] >= p.cols()) {
      throw ShapeError("categorical_cross_entropy: class " +
                       std::to_string(classes[i]) + " outside " + ShapeString(p));
    }
    if (weights[i] == 0.0) continue;
    loss -= weights[i] * std::log(ClampProb(p(static_cast<Eigen::Index>(i), classes[i])));
  }
  Matrix out(1, 1);
  out(0, 0) = loss;
  std::vector<int> c(classes.begin(), classes.end());
  std::vector<double> w(weights.begin(), weights.end());
  return probs.tape()->Record(std::move(out), {probs}, [probs, c, w](Tape& t, const Matrix& g) {
    const Matrix& p = probs.value();
    Matrix grad = Matrix::Zero(p.rows(), p.cols());
    for (size_t i = 0; i < c.size(); ++i) {
      const double q = p(static_cast<Eigen::Index>(i), c[i]);
      if (w[i] == 0.0 || Clamped(q)) continue;
      grad(static_cast<Eigen::Index>(i), c[i]) = -g(0, 0) * w[i] / q;
    }
    t.AccumulateGrad(probs, grad);
  });
}

Var WeightedSquaredError(const Var& pred, const Matrix& targets, const Matrix& weights) {
  const Matrix& p = pred.value();
  if (targets.rows() != p.rows() || targets.cols() != p.cols()) {
    ThrowShape("squared_error", p, targets);
  }
  if (weights.rows() != p.rows() || weights.cols() != p.cols()) {
    ThrowShape("squared_error", p, weights);
  }
  Matrix out(1, 1);
  out(0, 0) = (weights.array() * (p - targets).array().square()).sum();
  return pred.tape()->Record(
      std::move(out), {pred}, [pred, targets, weights](Tape& t, const Matrix& g) {
        t.AccumulateGrad(pred, (2.0 * g(0, 0) * weights.array() *
                                (pred.value() - targets).array())
                                   .matrix());
      });
}

}  // namespace icubench::nd
