// Copyright 2026 The mcctc Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef MCCTC_TENSOR_H_
#define MCCTC_TENSOR_H_

#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace mcctc {

using Rng = std::mt19937_64;
using Shape = std::vector<int>;

std::string ShapeToString(const Shape& shape);
size_t NumElements(const Shape& shape);

namespace internal {

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // empty until first needed
  bool requires_grad = false;
  bool is_leaf = true;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  std::vector<double>& EnsureGrad() {
    if (grad.empty()) grad.assign(value.size(), 0.0);
    return grad;
  }
};

}  // namespace internal

// Dense float64 array (rank <= 3, row-major) that doubles as a node of a
// reverse-mode autodiff graph. Copies are shallow: two Tensor values may
// refer to the same node.
class Tensor {
 public:
  Tensor() = default;

  static Tensor Constant(Shape shape, std::vector<double> values);
  static Tensor Zeros(Shape shape);
  static Tensor Scalar(double value);
  // Leaf that accumulates gradients.
  static Tensor Parameter(Shape shape, std::vector<double> values);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  int rank() const { return static_cast<int>(node_->shape.size()); }
  int dim(int axis) const;
  size_t size() const { return node_->value.size(); }

  std::span<const double> values() const { return node_->value; }
  std::span<double> mutable_values() { return node_->value; }
  double item() const;
  double at(int i) const { return node_->value[i]; }
  double at(int i, int j) const;

  bool requires_grad() const { return node_->requires_grad; }
  bool has_grad() const { return !node_->grad.empty(); }
  // Zeros when no gradient has been accumulated yet.
  std::span<const double> grad() const;
  std::span<double> mutable_grad() { return node_->EnsureGrad(); }
  void ZeroGrad();

  // Accumulates d(this)/d(leaf) into every reachable leaf that requires grad.
  // `this` must be a scalar.
  void Backward() const;

  internal::Node* node() const { return node_.get(); }
  const std::shared_ptr<internal::Node>& node_ptr() const { return node_; }
  explicit Tensor(std::shared_ptr<internal::Node> node)
      : node_(std::move(node)) {}

 private:
  std::shared_ptr<internal::Node> node_;
};

// Graph recording switch for the current thread. Inference runs with
// recording off so no backward closures are built.
bool GradEnabled();
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

// When on, every primitive rejects non-finite inputs with NumericError.
void SetDebugChecks(bool enabled);
bool DebugChecks();

// --- primitives -----------------------------------------------------------

// [m,k] x [k,n]; a rank-3 left operand [b,m,k] is treated as [b*m,k].
Tensor MatMul(const Tensor& a, const Tensor& b);
// Same shape, or `b` a vector broadcast over the last axis of `a`.
Tensor Add(const Tensor& a, const Tensor& b);
Tensor Mul(const Tensor& a, const Tensor& b);
Tensor Scale(const Tensor& x, double factor);
Tensor Relu(const Tensor& x);
// Exact (erf) form.
Tensor Gelu(const Tensor& x);
Tensor SoftmaxLastDim(const Tensor& x);
Tensor LogSoftmaxLastDim(const Tensor& x);
// Normalizes the last axis to zero mean and unit variance; no affine part.
Tensor LayerNormLastDim(const Tensor& x, double eps = 1e-5);
// Rows of `table` ([V,d]) selected by `ids`; result [L,d].
Tensor EmbedLookup(const Tensor& table, std::span<const int> ids);
Tensor Concat(std::span<const Tensor> parts, int axis);
Tensor Slice(const Tensor& x, int axis, int begin, int end);
// Swaps the last two axes.
Tensor Transpose(const Tensor& x);
// Inverted dropout. Identity unless `train` is set and p > 0.
Tensor Dropout(const Tensor& x, double p, bool train, Rng* rng);
Tensor Sum(const Tensor& x);

// Escape hatch for fused ops with hand-written gradients (CTC, cosine
// regularizer). `backward` receives the output gradient and one gradient
// buffer per input; buffers of inputs that need no gradient are empty.
using CustomBackward = std::function<void(
    std::span<const double> out_grad, std::vector<std::span<double>>& grads)>;
Tensor CustomOp(const char* name, Shape shape, std::vector<double> value,
                std::vector<Tensor> inputs, CustomBackward backward);

// Max over coordinates of |analytic - numeric| / (|analytic| + |numeric| +
// 1e-12) with central differences of step `h`. `f` must rebuild its graph
// from `x` on each call.
double GradCheck(const std::function<Tensor(const Tensor&)>& f, Tensor x,
                 double h = 1e-5);

}  // namespace mcctc

#endif  // MCCTC_TENSOR_H_
