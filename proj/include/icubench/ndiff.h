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

#ifndef ICUBENCH_NDIFF_H_
#define ICUBENCH_NDIFF_H_

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Core>

namespace icubench::nd {

// All values are 64-bit row-major matrices. A batch of vectors is a
// (batch x features) matrix; a sequence is stacked time-major as a
// (T * batch x features) matrix.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

std::string ShapeString(const Matrix& m);

// Flat store of named parameter tensors and their gradients.
class ParamStore {
 public:
  // Returns the index of the new parameter. Names must be unique.
  int Add(std::string name, Matrix value);
  int size() const { return static_cast<int>(values_.size()); }
  int Find(const std::string& name) const;  // -1 if absent

  const std::string& name(int i) const { return names_[i]; }
  Matrix& value(int i) { return values_[i]; }
  const Matrix& value(int i) const { return values_[i]; }
  Matrix& grad(int i) { return grads_[i]; }
  const Matrix& grad(int i) const { return grads_[i]; }

  void ZeroGrad();
  std::int64_t TotalSize() const;

 private:
  std::vector<std::string> names_;
  std::vector<Matrix> values_;
  std::vector<Matrix> grads_;
  std::unordered_map<std::string, int> index_;
};

class Tape;

// Handle to a node on a tape.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, int id) : tape_(tape), id_(id) {}

  Tape* tape() const { return tape_; }
  int id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }
  const Matrix& value() const;
  // Gradient after Backward(); a zero matrix when the node was not reached.
  Matrix grad() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }

 private:
  Tape* tape_ = nullptr;
  int id_ = -1;
};

// Records operations in execution order. Backward() walks the record in
// reverse, so every node is visited once after all of its consumers.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, const Matrix& grad)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Constant leaf (no gradient).
  Var Constant(Matrix value);
  // Leaf bound to parameter `index`; Backward() adds its gradient into the
  // store's gradient slot.
  Var Param(ParamStore& store, int index);

  // Node with the given parents. `backward` receives the node's gradient and
  // must call AccumulateGrad on the parents.
  Var Record(Matrix value, std::initializer_list<Var> parents, BackwardFn backward);
  Var Record(Matrix value, std::span<const Var> parents, BackwardFn backward);

  void AccumulateGrad(const Var& v, const Matrix& g);
  // Adds g into rows [row, row + g.rows()) and columns [col, ...) of v's gradient.
  void AccumulateGradBlock(const Var& v, Eigen::Index row, Eigen::Index col,
                           const Matrix& g);
  bool RequiresGrad(const Var& v) const { return nodes_[v.id()].requires_grad; }

  // Seeds d(root)/d(root) = 1 and propagates. Throws ShapeError for a
  // non-scalar root and ContractError when called a second time.
  void Backward(const Var& root);

  const Matrix& value(int id) const { return nodes_[id].value; }
  Matrix grad(int id) const;
  size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix value;
    Matrix grad;  // allocated on first accumulation
    bool requires_grad = false;
    BackwardFn backward;
    ParamStore* store = nullptr;
    int param = -1;
  };
  Matrix& GradSlot(int id);

  std::vector<Node> nodes_;
  bool backward_done_ = false;
};

// Operations. Shape mismatches throw ShapeError naming the op and shapes.
Var MatMul(const Var& a, const Var& b);
// Elementwise sum; `b` may also be a 1 x cols row broadcast over a's rows.
Var Add(const Var& a, const Var& b);
Var Sub(const Var& a, const Var& b);
Var Mul(const Var& a, const Var& b);  // elementwise
Var Scale(const Var& a, double factor);
Var Sigmoid(const Var& a);
Var Tanh(const Var& a);
Var Relu(const Var& a);
Var Softmax(const Var& a);  // per row
Var Concat(std::span<const Var> parts);  // along columns
Var SliceCols(const Var& a, Eigen::Index begin, Eigen::Index width);
Var ConcatRows(std::span<const Var> parts);
Var SliceRows(const Var& a, Eigen::Index begin, Eigen::Index count);
// Rows [t * batch, (t + 1) * batch) of a time-major stacked sequence.
Var SliceTime(const Var& a, int t, int batch);
Var GatherRows(const Var& a, std::span<const Eigen::Index> rows);
// Inverted dropout: kept units are scaled by 1 / (1 - p); p = 1 zeroes the
// input. Identity when `training` is false. The mask depends only on `seed`.
Var Dropout(const Var& a, double p, std::uint64_t seed, bool training);
Var Sum(const Var& a);   // 1 x 1
Var Mean(const Var& a);  // 1 x 1

// Probabilities are clamped into [kProbEpsilon, 1 - kProbEpsilon] before the
// log; clamped entries pass no gradient.
inline constexpr double kProbEpsilon = 1e-7;

// sum_ij w_ij * -(y log p + (1 - y) log(1 - p)).
Var WeightedBinaryCrossEntropy(const Var& probs, const Matrix& targets,
                               const Matrix& weights);
// sum_i w_i * -log p_{i, class_i}.
Var WeightedCategoricalCrossEntropy(const Var& probs, std::span<const int> classes,
                                    std::span<const double> weights);
// sum_ij w_ij * (p - y)^2.
Var WeightedSquaredError(const Var& pred, const Matrix& targets, const Matrix& weights);

}  // namespace icubench::nd

#endif  // ICUBENCH_NDIFF_H_
