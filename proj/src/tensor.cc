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

#include "mcctc/tensor.h"

#include <Eigen/Core>
#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include "mcctc/error.h"

namespace mcctc {

using internal::Node;

namespace {

using RowMat =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

thread_local bool g_grad_enabled = true;
std::atomic<bool> g_debug_checks{false};

void CheckFinite(const Tensor& t, const char* op) {
  if (!DebugChecks()) return;
  for (double v : t.values()) {
    if (!std::isfinite(v)) {
      throw NumericError(std::string(op) + ": non-finite input of shape " +
                         ShapeToString(t.shape()));
    }
  }
}

[[noreturn]] void ShapeMismatch(const char* op, const Shape& a,
                                const Shape& b) {
  throw ShapeError(std::string(op) + ": shape mismatch " + ShapeToString(a) +
                   " vs " + ShapeToString(b));
}

std::shared_ptr<Node> NewNode(Shape shape, const char* op,
                              std::initializer_list<const Tensor*> inputs) {
  auto node = std::make_shared<Node>();
  node->value.assign(NumElements(shape), 0.0);
  node->shape = std::move(shape);
  node->op = op;
  node->is_leaf = false;
  if (g_grad_enabled) {
    for (const Tensor* t : inputs) node->requires_grad |= t->requires_grad();
    if (node->requires_grad) {
      for (const Tensor* t : inputs) node->parents.push_back(t->node_ptr());
    }
  }
  return node;
}

// Gradient buffer of the i-th parent, or nullptr if it needs none.
double* ParentGrad(Node& self, size_t i) {
  Node& p = *self.parents[i];
  return p.requires_grad ? p.EnsureGrad().data() : nullptr;
}

int LastDim(const Tensor& t) { return t.rank() == 0 ? 1 : t.shape().back(); }

enum class Broadcast { kSame, kLastDim };

Broadcast CheckBroadcast(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() == b.shape()) return Broadcast::kSame;
  if (b.rank() == 1 && a.rank() >= 1 && b.dim(0) == a.shape().back()) {
    return Broadcast::kLastDim;
  }
  ShapeMismatch(op, a.shape(), b.shape());
}

}  // namespace

std::string ShapeToString(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

size_t NumElements(const Shape& shape) {
  size_t n = 1;
  for (int d : shape) {
    if (d < 0) throw ShapeError("negative dimension in " + ShapeToString(shape));
    n *= static_cast<size_t>(d);
  }
  return n;
}

bool GradEnabled() { return g_grad_enabled; }
NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) {
  g_grad_enabled = false;
}
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

void SetDebugChecks(bool enabled) { g_debug_checks = enabled; }
bool DebugChecks() { return g_debug_checks; }

// --- Tensor ---------------------------------------------------------------

Tensor Tensor::Constant(Shape shape, std::vector<double> values) {
  if (shape.size() > 3) {
    throw ShapeError("rank > 3 not supported: " + ShapeToString(shape));
  }
  if (values.size() != NumElements(shape)) {
    throw ShapeError("constant: " + std::to_string(values.size()) +
                     " values for shape " + ShapeToString(shape));
  }
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->value = std::move(values);
  return Tensor(std::move(node));
}

Tensor Tensor::Zeros(Shape shape) {
  const size_t n = NumElements(shape);
  return Constant(std::move(shape), std::vector<double>(n, 0.0));
}

Tensor Tensor::Scalar(double value) { return Constant({}, {value}); }

Tensor Tensor::Parameter(Shape shape, std::vector<double> values) {
  Tensor t = Constant(std::move(shape), std::move(values));
  t.node_->requires_grad = true;
  return t;
}

int Tensor::dim(int axis) const {
  if (axis < 0) axis += rank();
  if (axis < 0 || axis >= rank()) {
    throw ShapeError("axis " + std::to_string(axis) + " out of range for " +
                     ShapeToString(shape()));
  }
  return node_->shape[axis];
}

double Tensor::item() const {
  if (size() != 1) {
    throw ShapeError("item() on tensor of shape " + ShapeToString(shape()));
  }
  return node_->value[0];
}

double Tensor::at(int i, int j) const {
  return node_->value[static_cast<size_t>(i) * shape().back() + j];
}

std::span<const double> Tensor::grad() const {
  return node_->EnsureGrad();
}

void Tensor::ZeroGrad() {
  if (!node_->grad.empty()) {
    std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
  }
}

void Tensor::Backward() const {
  if (size() != 1) {
    throw ShapeError("backward() needs a scalar loss, got shape " +
                     ShapeToString(shape()));
  }
  if (!node_->requires_grad) return;

  // Iterative post-order DFS gives a topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, size_t>> stack;
  stack.emplace_back(node_.get(), 0);
  visited.insert(node_.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* parent = node->parents[next++].get();
      if (parent->requires_grad && visited.insert(parent).second) {
        stack.emplace_back(parent, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  for (Node* n : order) {
    if (!n->is_leaf) n->grad.assign(n->value.size(), 0.0);
  }
  node_->EnsureGrad()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (!n->is_leaf && n->backward) n->backward(*n);
  }
}

// --- primitives -----------------------------------------------------------

Tensor MatMul(const Tensor& a, const Tensor& b) {
  if (a.rank() < 2 || b.rank() != 2 || a.shape().back() != b.dim(0)) {
    ShapeMismatch("matmul", a.shape(), b.shape());
  }
  CheckFinite(a, "matmul");
  CheckFinite(b, "matmul");
  const int k = b.dim(0);
  const int n = b.dim(1);
  const int m = static_cast<int>(a.size() / std::max(k, 1));
  Shape out_shape = a.shape();
  out_shape.back() = n;
  auto node = NewNode(out_shape, "matmul", {&a, &b});
  if (m > 0 && n > 0) {
    MutMap(node->value.data(), m, n).noalias() =
        ConstMap(a.values().data(), m, k) * ConstMap(b.values().data(), k, n);
  }
  if (node->requires_grad) {
    node->backward = [m, k, n](Node& self) {
      if (m == 0 || n == 0 || k == 0) return;
      ConstMap dc(self.grad.data(), m, n);
      const Node& pa = *self.parents[0];
      const Node& pb = *self.parents[1];
      if (double* ga = ParentGrad(self, 0)) {
        MutMap(ga, m, k).noalias() += dc * ConstMap(pb.value.data(), k, n).transpose();
      }
      if (double* gb = ParentGrad(self, 1)) {
        MutMap(gb, k, n).noalias() += ConstMap(pa.value.data(), m, k).transpose() * dc;
      }
    };
  }
  return Tensor(std::move(node));
}

Tensor Add(const Tensor& a, const Tensor& b) {
  const Broadcast mode = CheckBroadcast("add", a, b);
  CheckFinite(a, "add");
  CheckFinite(b, "add");
  auto node = NewNode(a.shape(), "add", {&a, &b});
  const auto av = a.values();
  const auto bv = b.values();
  const size_t inner = bv.size();
  auto& out = node->value;
  if (mode == Broadcast::kSame) {
    for (size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
  } else {
    for (size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i % inner];
  }
  if (node->requires_grad) {
    node->backward = [inner](Node& self) {
      const auto& g = self.grad;
      if (double* ga = ParentGrad(self, 0)) {
        for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
      }
      if (double* gb = ParentGrad(self, 1)) {
        for (size_t i = 0; i < g.size(); ++i) gb[i % inner] += g[i];
      }
    };
  }
  return Tensor(std::move(node));
}

Tensor Mul(const Tensor& a, const Tensor& b) {
  const Broadcast mode = CheckBroadcast("mul", a, b);
  CheckFinite(a, "mul");
  CheckFinite(b, "mul");
  auto node = NewNode(a.shape(), "mul", {&a, &b});
  const auto av = a.values();
  const auto bv = b.values();
  const size_t inner = bv.size();
  auto& out = node->value;
  if (mode == Broadcast::kSame) {
    for (size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  } else {
    for (size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i % inner];
  }
  if (node->requires_grad) {
    node->backward = [inner](Node& self) {
      const auto& g = self.grad;
      const auto& av = self.parents[0]->value;
      const auto& bv = self.parents[1]->value;
      if (double* ga = ParentGrad(self, 0)) {
        for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i % inner];
      }
      if (double* gb = ParentGrad(self, 1)) {
        for (size_t i = 0; i < g.size(); ++i) gb[i % inner] += g[i] * av[i];
      }
    };
  }
  return Tensor(std::move(node));
}

Tensor Scale(const Tensor& x, double factor) {
  CheckFinite(x, "scale");
  auto node = NewNode(x.shape(), "scale", {&x});
  const auto xv = x.values();
  for (size_t i = 0; i < xv.size(); ++i) node->value[i] = xv[i] * factor;
  if (node->requires_grad) {
    node->backward = [factor](Node& self) {
      double* gx = ParentGrad(self, 0);
      for (size_t i = 0; i < self.grad.size(); ++i) gx[i] += self.grad[i] * factor;
    };
  }
  return Tensor(std::move(node));
}

Tensor Relu(const Tensor& x) {
  CheckFinite(x, "relu");
  auto node = NewNode(x.shape(), "relu", {&x});
  const auto xv = x.values();
  // Written so that NaN propagates instead of being clamped to zero.
  for (size_t i = 0; i < xv.size(); ++i) node->value[i] = xv[i] < 0 ? 0 : xv[i];
  if (node->requires_grad) {
    node->backward = [](Node& self) {
      double* gx = ParentGrad(self, 0);
      const auto& xv = self.parents[0]->value;
      for (size_t i = 0; i < self.grad.size(); ++i) {
        if (xv[i] > 0) gx[i] += self.grad[i];
      }
    };
  }
  return Tensor(std::move(node));
}

Tensor Gelu(const Tensor& x) {
  CheckFinite(x, "gelu");
  auto node = NewNode(x.shape(), "gelu", {&x});
  const auto xv = x.values();
  for (size_t i = 0; i < xv.size(); ++i) {
    node->value[i] = 0.5 * xv[i] * (1.0 + std::erf(xv[i] * M_SQRT1_2));
  }
  if (node->requires_grad) {
    node->backward = [](Node& self) {
      double* gx = ParentGrad(self, 0);
      const auto& xv = self.parents[0]->value;
      constexpr double kInvSqrt2Pi = 0.3989422804014327;
      for (size_t i = 0; i < self.grad.size(); ++i) {
        const double cdf = 0.5 * (1.0 + std::erf(xv[i] * M_SQRT1_2));
        const double pdf = kInvSqrt2Pi * std::exp(-0.5 * xv[i] * xv[i]);
        gx[i] += self.grad[i] * (cdf + xv[i] * pdf);
      }
    };
  }
  return Tensor(std::move(node));
}

Tensor SoftmaxLastDim(const Tensor& x) {
  CheckFinite(x, "softmax");
  auto node = NewNode(x.shape(), "softmax", {&x});
  const int n = LastDim(x);
  const size_t rows = n == 0 ? 0 : x.size() / n;
  const auto xv = x.values();
  auto& y = node->value;
  for (size_t r = 0; r < rows; ++r) {
    const double* in = xv.data() + r * n;
    double* out = y.data() + r * n;
    const double mx = *std::max_element(in, in + n);
    double total = 0;
    for (int j = 0; j < n; ++j) total += (out[j] = std::exp(in[j] - mx));
    for (int j = 0; j < n; ++j) out[j] /= total;
  }
  if (node->requires_grad) {
    node->backward = [n, rows](Node& self) {
      double* gx = ParentGrad(self, 0);
      for (size_t r = 0; r < rows; ++r) {
        const double* y = self.value.data() + r * n;
        const double* g = self.grad.data() + r * n;
        double dot = 0;
        for (int j = 0; j < n; ++j) dot += g[j] * y[j];
        for (int j = 0; j < n; ++j) gx[r * n + j] += y[j] * (g[j] - dot);
      }
    };
  }
  return Tensor(std::move(node));
}

Tensor LogSoftmaxLastDim(const Tensor& x) {
  CheckFinite(x, "log_softmax");
  auto node = NewNode(x.shape(), "log_softmax", {&x});
  const int n = LastDim(x);
  const size_t rows = n == 0 ? 0 : x.size() / n;
  const auto xv = x.values();
  auto& y = node->value;
  for (size_t r = 0; r < rows; ++r) {
    const double* in = xv.data() + r * n;
    double* out = y.data() + r * n;
    const double mx = *std::max_element(in, in + n);
    double total = 0;
    for (int j = 0; j < n; ++j) total += std::exp(in[j] - mx);
    const double lse = mx + std::log(total);
    for (int j = 0; j < n; ++j) out[j] = in[j] - lse;
  }
  if (node->requires_grad) {
    node->backward = [n, rows](Node& self) {
      double* gx = ParentGrad(self, 0);
      for (size_t r = 0; r < rows; ++r) {
        const double* y = self.value.data() + r * n;
        const double* g = self.grad.data() + r * n;
        double total = 0;
        for (int j = 0; j < n; ++j) total += g[j];
        for (int j = 0; j < n; ++j) {
          gx[r * n + j] += g[j] - std::exp(y[j]) * total;
        }
      }
    };
  }
  return Tensor(std::move(node));
}

Tensor LayerNormLastDim(const Tensor& x, double eps) {
  CheckFinite(x, "layer_norm");
  auto node = NewNode(x.shape(), "layer_norm", {&x});
  const int n = LastDim(x);
  const size_t rows = n == 0 ? 0 : x.size() / n;
  std::vector<double> rstd(rows);
  const auto xv = x.values();
  for (size_t r = 0; r < rows; ++r) {
    const double* in = xv.data() + r * n;
    double* out = node->value.data() + r * n;
    double mean = 0;
    for (int j = 0; j < n; ++j) mean += in[j];
    mean /= n;
    double var = 0;
    for (int j = 0; j < n; ++j) var += (in[j] - mean) * (in[j] - mean);
    var /= n;
    rstd[r] = 1.0 / std::sqrt(var + eps);
    for (int j = 0; j < n; ++j) out[j] = (in[j] - mean) * rstd[r];
  }
  if (node->requires_grad) {
    node->backward = [n, rows, rstd = std::move(rstd)](Node& self) {
      double* gx = ParentGrad(self, 0);
      for (size_t r = 0; r < rows; ++r) {
        const double* xhat = self.value.data() + r * n;
        const double* g = self.grad.data() + r * n;
        double mean_g = 0;
        double mean_gx = 0;
        for (int j = 0; j < n; ++j) {
          mean_g += g[j];
          mean_gx += g[j] * xhat[j];
        }
        mean_g /= n;
        mean_gx /= n;
        for (int j = 0; j < n; ++j) {
          gx[r * n + j] += rstd[r] * (g[j] - mean_g - xhat[j] * mean_gx);
        }
      }
    };
  }
  return Tensor(std::move(node));
}

Tensor EmbedLookup(const Tensor& table, std::span<const int> ids) {
  if (table.rank() != 2) {
    throw ShapeError("embed_lookup: table must be rank 2, got " +
                     ShapeToString(table.shape()));
  }
  const int vocab = table.dim(0);
  const int d = table.dim(1);
  for (int id : ids) {
    if (id < 0 || id >= vocab) {
      throw std::out_of_range("embed_lookup: id " + std::to_string(id) +
                              " out of range [0," + std::to_string(vocab) +
                              ")");
    }
  }
  CheckFinite(table, "embed_lookup");
  const int rows = static_cast<int>(ids.size());
  auto node = NewNode({rows, d}, "embed_lookup", {&table});
  const auto tv = table.values();
  for (int i = 0; i < rows; ++i) {
    std::copy_n(tv.data() + static_cast<size_t>(ids[i]) * d, d,
                node->value.data() + static_cast<size_t>(i) * d);
  }
  if (node->requires_grad) {
    node->backward = [d, ids = std::vector<int>(ids.begin(), ids.end())](
                         Node& self) {
      double* gt = ParentGrad(self, 0);
      for (size_t i = 0; i < ids.size(); ++i) {
        const double* g = self.grad.data() + i * d;
        double* dst = gt + static_cast<size_t>(ids[i]) * d;
        for (int j = 0; j < d; ++j) dst[j] += g[j];
      }
    };
  }
  return Tensor(std::move(node));
}

namespace {

// (outer, axis extent, inner) view of a shape around `axis`.
struct AxisView {
  size_t outer = 1;
  size_t extent = 1;
  size_t inner = 1;
};

AxisView ViewAround(const Shape& shape, int axis) {
  AxisView v;
  for (int i = 0; i < axis; ++i) v.outer *= shape[i];
  v.extent = shape[axis];
  for (size_t i = axis + 1; i < shape.size(); ++i) v.inner *= shape[i];
  return v;
}

int NormalizeAxis(int axis, int rank, const char* op) {
  if (axis < 0) axis += rank;
  if (axis < 0 || axis >= rank) {
    throw ShapeError(std::string(op) + ": axis out of range");
  }
  return axis;
}

}  // namespace

Tensor Concat(std::span<const Tensor> parts, int axis) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  const Shape& first = parts[0].shape();
  axis = NormalizeAxis(axis, static_cast<int>(first.size()), "concat");
  Shape out_shape = first;
  out_shape[axis] = 0;
  for (const auto& p : parts) {
    Shape a = p.shape();
    Shape b = first;
    if (a.size() != b.size()) ShapeMismatch("concat", first, p.shape());
    a[axis] = b[axis] = 0;
    if (a != b) ShapeMismatch("concat", first, p.shape());
    out_shape[axis] += p.dim(axis);
    CheckFinite(p, "concat");
  }
  auto node = std::make_shared<Node>();
  {
    // NewNode takes an initializer list; build the node by hand for N inputs.
    node->value.assign(NumElements(out_shape), 0.0);
    node->shape = out_shape;
    node->op = "concat";
    node->is_leaf = false;
    if (GradEnabled()) {
      for (const auto& p : parts) node->requires_grad |= p.requires_grad();
      if (node->requires_grad) {
        for (const auto& p : parts) node->parents.push_back(p.node_ptr());
      }
    }
  }
  const AxisView out_view = ViewAround(out_shape, axis);
  std::vector<size_t> offsets;
  size_t offset = 0;
  for (const auto& p : parts) {
    const AxisView v = ViewAround(p.shape(), axis);
    offsets.push_back(offset);
    const size_t block = v.extent * v.inner;
    for (size_t o = 0; o < v.outer; ++o) {
      std::copy_n(p.values().data() + o * block, block,
                  node->value.data() + o * out_view.extent * out_view.inner +
                      offset * v.inner);
    }
    offset += v.extent;
  }
  if (node->requires_grad) {
    node->backward = [axis, out_view, offsets](Node& self) {
      for (size_t i = 0; i < self.parents.size(); ++i) {
        double* gp = ParentGrad(self, i);
        if (gp == nullptr) continue;
        const AxisView v = ViewAround(self.parents[i]->shape, axis);
        const size_t block = v.extent * v.inner;
        for (size_t o = 0; o < v.outer; ++o) {
          const double* src = self.grad.data() +
                              o * out_view.extent * out_view.inner +
                              offsets[i] * v.inner;
          double* dst = gp + o * block;
          for (size_t j = 0; j < block; ++j) dst[j] += src[j];
        }
      }
    };
  }
  return Tensor(std::move(node));
}

Tensor Slice(const Tensor& x, int axis, int begin, int end) {
  axis = NormalizeAxis(axis, x.rank(), "slice");
  if (begin < 0 || end < begin || end > x.dim(axis)) {
    throw ShapeError("slice: range [" + std::to_string(begin) + "," +
                     std::to_string(end) + ") invalid for " +
                     ShapeToString(x.shape()) + " axis " +
                     std::to_string(axis));
  }
  CheckFinite(x, "slice");
  Shape out_shape = x.shape();
  out_shape[axis] = end - begin;
  auto node = NewNode(out_shape, "slice", {&x});
  const AxisView in = ViewAround(x.shape(), axis);
  const size_t block = static_cast<size_t>(end - begin) * in.inner;
  for (size_t o = 0; o < in.outer; ++o) {
    std::copy_n(x.values().data() + o * in.extent * in.inner + begin * in.inner,
                block, node->value.data() + o * block);
  }
  if (node->requires_grad) {
    node->backward = [in, begin, block](Node& self) {
      double* gx = ParentGrad(self, 0);
      for (size_t o = 0; o < in.outer; ++o) {
        double* dst = gx + o * in.extent * in.inner + begin * in.inner;
        const double* src = self.grad.data() + o * block;
        for (size_t j = 0; j < block; ++j) dst[j] += src[j];
      }
    };
  }
  return Tensor(std::move(node));
}

Tensor Transpose(const Tensor& x) {
  if (x.rank() < 2) {
    throw ShapeError("transpose: need rank >= 2, got " +
                     ShapeToString(x.shape()));
  }
  CheckFinite(x, "transpose");
  Shape out_shape = x.shape();
  std::swap(out_shape[out_shape.size() - 1], out_shape[out_shape.size() - 2]);
  const int rows = x.dim(-2);
  const int cols = x.dim(-1);
  const size_t batch = rows * cols == 0 ? 0 : x.size() / (rows * cols);
  auto node = NewNode(out_shape, "transpose", {&x});
  for (size_t b = 0; b < batch; ++b) {
    const size_t off = b * rows * cols;
    MutMap(node->value.data() + off, cols, rows) =
        ConstMap(x.values().data() + off, rows, cols).transpose();
  }
  if (node->requires_grad) {
    node->backward = [rows, cols, batch](Node& self) {
      double* gx = ParentGrad(self, 0);
      for (size_t b = 0; b < batch; ++b) {
        const size_t off = b * rows * cols;
        MutMap(gx + off, rows, cols) +=
            ConstMap(self.grad.data() + off, cols, rows).transpose();
      }
    };
  }
  return Tensor(std::move(node));
}

Tensor Dropout(const Tensor& x, double p, bool train, Rng* rng) {
  if (!train || p <= 0.0) return x;
  if (p >= 1.0) throw std::invalid_argument("dropout rate must be < 1");
  if (rng == nullptr) throw std::invalid_argument("dropout needs an rng");
  CheckFinite(x, "dropout");
  auto node = NewNode(x.shape(), "dropout", {&x});
  std::vector<double> mask(x.size());
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  const double keep_scale = 1.0 / (1.0 - p);
  const auto xv = x.values();
  for (size_t i = 0; i < mask.size(); ++i) {
    mask[i] = uniform(*rng) < p ? 0.0 : keep_scale;
    node->value[i] = xv[i] * mask[i];
  }
  if (node->requires_grad) {
    node->backward = [mask = std::move(mask)](Node& self) {
      double* gx = ParentGrad(self, 0);
      for (size_t i = 0; i < mask.size(); ++i) gx[i] += self.grad[i] * mask[i];
    };
  }
  return Tensor(std::move(node));
}

Tensor Sum(const Tensor& x) {
  CheckFinite(x, "sum");
  auto node = NewNode({}, "sum", {&x});
  double total = 0;
  for (double v : x.values()) total += v;
  node->value[0] = total;
  if (node->requires_grad) {
    node->backward = [](Node& self) {
      double* gx = ParentGrad(self, 0);
      const double g = self.grad[0];
      const size_t n = self.parents[0]->value.size();
      for (size_t i = 0; i < n; ++i) gx[i] += g;
    };
  }
  return Tensor(std::move(node));
}

Tensor CustomOp(const char* name, Shape shape, std::vector<double> value,
                std::vector<Tensor> inputs, CustomBackward backward) {
  if (value.size() != NumElements(shape)) {
    throw ShapeError(std::string(name) + ": value size does not match shape " +
                     ShapeToString(shape));
  }
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  node->op = name;
  node->is_leaf = false;
  if (GradEnabled()) {
    for (const auto& t : inputs) node->requires_grad |= t.requires_grad();
    if (node->requires_grad) {
      for (const auto& t : inputs) node->parents.push_back(t.node_ptr());
    }
  }
  if (node->requires_grad) {
    node->backward = [backward = std::move(backward)](Node& self) {
      std::vector<std::span<double>> grads;
      grads.reserve(self.parents.size());
      for (size_t i = 0; i < self.parents.size(); ++i) {
        if (self.parents[i]->requires_grad) {
          grads.emplace_back(self.parents[i]->EnsureGrad());
        } else {
          grads.emplace_back();
        }
      }
      backward(self.grad, grads);
    };
  }
  return Tensor(std::move(node));
}

double GradCheck(const std::function<Tensor(const Tensor&)>& f, Tensor x,
                 double h) {
  Tensor param = Tensor::Parameter(
      x.shape(), std::vector<double>(x.values().begin(), x.values().end()));
  Tensor loss = f(param);
  loss.Backward();
  const std::vector<double> analytic(param.grad().begin(), param.grad().end());

  double worst = 0.0;
  auto values = param.mutable_values();
  for (size_t i = 0; i < values.size(); ++i) {
    const double saved = values[i];
    double plus;
    double minus;
    {
      NoGradGuard no_grad;
      values[i] = saved + h;
      plus = f(param).item();
      values[i] = saved - h;
      minus = f(param).item();
    }
    values[i] = saved;
    const double numeric = (plus - minus) / (2 * h);
    const double err = std::abs(analytic[i] - numeric) /
                       (std::abs(analytic[i]) + std::abs(numeric) + 1e-12);
    worst = std::max(worst, err);
  }
  return worst;
}

}  // namespace mcctc
