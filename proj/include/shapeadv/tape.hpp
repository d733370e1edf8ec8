// Copyright 2026 The ShapeAdv Lab Authors
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

// Reverse-mode differentiation over a recorded sequence of tensor ops.
//
// Ops are evaluated eagerly as they are recorded. The tape can afterwards be
// replayed with new leaf values (evaluate) and differentiated (gradient),
// which is how the attack loops reuse one graph across optimizer steps.

#pragma once

#include <compare>
#include <limits>
#include <map>
#include <optional>
#include <string_view>

#include "shapeadv/tensor.hpp"

namespace shapeadv {

struct NodeId {
  std::size_t index = 0;
  auto operator<=>(const NodeId&) const = default;
};

enum class Op {
  Leaf,
  Add,
  Sub,
  Mul,
  Scale,
  MatMul,
  Relu,
  MaxReduce,
  MinReduce,
  MeanReduce,
  SumReduce,
  Square,
  SqrtEps,
  L2Norm,
  SoftmaxCrossEntropy,
  Softmax,
  Gather,
  Concat,
  PairwiseSqDist,
  Reshape,
};

inline std::string_view op_name(Op op) {
  switch (op) {
    case Op::Leaf: return "leaf";
    case Op::Add: return "add";
    case Op::Sub: return "sub";
    case Op::Mul: return "mul";
    case Op::Scale: return "scale";
    case Op::MatMul: return "matmul";
    case Op::Relu: return "relu";
    case Op::MaxReduce: return "max_reduce";
    case Op::MinReduce: return "min_reduce";
    case Op::MeanReduce: return "mean_reduce";
    case Op::SumReduce: return "sum_reduce";
    case Op::Square: return "square";
    case Op::SqrtEps: return "sqrt_eps";
    case Op::L2Norm: return "l2_norm";
    case Op::SoftmaxCrossEntropy: return "softmax_cross_entropy";
    case Op::Softmax: return "softmax";
    case Op::Gather: return "gather";
    case Op::Concat: return "concat";
    case Op::PairwiseSqDist: return "pairwise_sq_dist";
    case Op::Reshape: return "reshape";
  }
  return "?";
}

enum class LeafKind { Input, Parameter, Constant };

inline constexpr double kSqrtEpsilon = 1e-12;

class Tape {
 public:
  using Bindings = std::map<NodeId, Tensor>;
  using Gradients = std::map<NodeId, Tensor>;

  // Leaves.
  NodeId input(Tensor value) { return leaf(std::move(value), LeafKind::Input); }
  NodeId parameter(Tensor value) { return leaf(std::move(value), LeafKind::Parameter); }
  NodeId constant(Tensor value) { return leaf(std::move(value), LeafKind::Constant); }

  // Elementwise. add() also accepts a rank-1 right operand matching the last
  // dimension of the left one (row bias).
  NodeId add(NodeId a, NodeId b) { return record(Op::Add, {a, b}); }
  NodeId sub(NodeId a, NodeId b) { return record(Op::Sub, {a, b}); }
  NodeId mul(NodeId a, NodeId b) { return record(Op::Mul, {a, b}); }
  NodeId scale(NodeId a, double s) {
    Node n = make(Op::Scale, {a});
    n.scalar = s;
    return push(std::move(n));
  }
  NodeId relu(NodeId a) { return record(Op::Relu, {a}); }
  /// (x)^+ = max(x, 0).
  NodeId hinge(NodeId a) { return relu(a); }
  NodeId square(NodeId a) { return record(Op::Square, {a}); }
  NodeId sqrt_eps(NodeId a, double eps = kSqrtEpsilon) {
    Node n = make(Op::SqrtEps, {a});
    n.scalar = eps;
    return push(std::move(n));
  }
  /// sqrt(sum(x^2) + 1e-12), a scalar.
  NodeId l2_norm(NodeId a) { return record(Op::L2Norm, {a}); }

  NodeId matmul(NodeId a, NodeId b) { return record(Op::MatMul, {a, b}); }

  // Reductions over one axis drop that axis; without an axis they reduce to
  // a scalar. Max/min route the adjoint to the lowest index among ties.
  NodeId max_reduce(NodeId a, std::size_t axis) { return reduce(Op::MaxReduce, a, axis); }
  NodeId min_reduce(NodeId a, std::size_t axis) { return reduce(Op::MinReduce, a, axis); }
  NodeId sum(NodeId a) { return reduce(Op::SumReduce, a, std::nullopt); }
  NodeId sum(NodeId a, std::size_t axis) { return reduce(Op::SumReduce, a, axis); }
  NodeId mean(NodeId a) { return reduce(Op::MeanReduce, a, std::nullopt); }
  NodeId mean(NodeId a, std::size_t axis) { return reduce(Op::MeanReduce, a, axis); }

  /// Mean softmax cross-entropy. logits are [C] with one label or [B, C]
  /// with B labels.
  NodeId softmax_cross_entropy(NodeId logits, std::vector<std::size_t> labels) {
    Node n = make(Op::SoftmaxCrossEntropy, {logits});
    n.indices = std::move(labels);
    return push(std::move(n));
  }
  NodeId softmax(NodeId a) { return record(Op::Softmax, {a}); }

  /// Slices along axis 0.
  NodeId gather(NodeId a, std::vector<std::size_t> rows) {
    Node n = make(Op::Gather, {a});
    n.indices = std::move(rows);
    return push(std::move(n));
  }
  /// Concatenation along axis 0.
  NodeId concat(std::vector<NodeId> parts) { return record(Op::Concat, std::move(parts)); }

  /// [N, D] x [M, D] -> [N, M] squared Euclidean distances.
  NodeId pairwise_sq_dist(NodeId a, NodeId b) { return record(Op::PairwiseSqDist, {a, b}); }

  NodeId reshape(NodeId a, Shape shape) {
    Node n = make(Op::Reshape, {a});
    n.target = std::move(shape);
    return push(std::move(n));
  }

  const Tensor& value(NodeId id) const { return nodes_.at(id.index).value; }
  std::size_t size() const noexcept { return nodes_.size(); }
  Op op(NodeId id) const { return nodes_.at(id.index).op; }
  std::span<const NodeId> inputs(NodeId id) const { return nodes_.at(id.index).inputs; }
  bool is_parameter(NodeId id) const {
    const Node& n = nodes_.at(id.index);
    return n.op == Op::Leaf && n.leaf == LeafKind::Parameter;
  }
  std::vector<NodeId> parameters() const {
    std::vector<NodeId> ids;
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
      if (is_parameter(NodeId{i})) ids.push_back(NodeId{i});
    }
    return ids;
  }

  /// Replaces the value of a leaf. Shape must be unchanged.
  void set(NodeId id, Tensor value) {
    Node& n = nodes_.at(id.index);
    if (n.op != Op::Leaf) {
      throw ShapeError("node " + std::to_string(id.index) + " (" +
                       std::string(op_name(n.op)) + ") is not a leaf");
    }
    if (value.shape() != n.value.shape()) {
      throw ShapeError("node " + std::to_string(id.index) + " (leaf): binding shape " +
                       to_string(value.shape()) + " differs from " +
                       to_string(n.value.shape()));
    }
    n.value = std::move(value);
    n.transposed.clear();
  }

  /// Binds leaves and recomputes every derived node in recording order.
  void evaluate(const Bindings& inputs = {}) {
    for (const auto& [id, t] : inputs) set(id, t);
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
      if (nodes_[i].op != Op::Leaf) forward(i);
    }
  }

  /// Adjoints of a scalar loss with respect to every parameter leaf.
  Gradients gradient(NodeId loss) const {
    const Node& l = nodes_.at(loss.index);
    if (l.value.size() != 1) {
      throw ShapeError("gradient: loss node " + std::to_string(loss.index) + " (" +
                       std::string(op_name(l.op)) + ") is not scalar, shape " +
                       to_string(l.value.shape()));
    }
    std::vector<Tensor>& adj = adjoints_;
    if (adj.size() < nodes_.size()) adj.resize(nodes_.size());
    std::vector<bool> live(loss.index + 1, false);
    adj[loss.index] = Tensor(l.value.shape(), 1.0);
    live[loss.index] = true;
    for (std::size_t i = loss.index + 1; i-- > 0;) {
      if (!live[i] || nodes_[i].op == Op::Leaf || !nodes_[i].requires_grad) continue;
      backward(i, adj, live);
    }
    Gradients out;
    for (std::size_t i = 0; i <= loss.index; ++i) {
      if (!is_parameter(NodeId{i})) continue;
      out.emplace(NodeId{i}, live[i] ? adj[i] : Tensor(nodes_[i].value.shape(), 0.0));
    }
    return out;
  }

 private:
  struct Node {
    Op op = Op::Leaf;
    LeafKind leaf = LeafKind::Constant;
    std::vector<NodeId> inputs;
    Tensor value;
    bool requires_grad = false;
    std::vector<std::size_t> indices;  // gather rows, labels, or arg-extrema
    std::optional<std::size_t> axis;
    double scalar = 0.0;
    Shape target;
    mutable std::vector<double> transposed;  // cached B^T for leaf matmul operands
  };

  NodeId leaf(Tensor value, LeafKind kind) {
    Node n;
    n.op = Op::Leaf;
    n.leaf = kind;
    n.value = std::move(value);
    n.requires_grad = kind == LeafKind::Parameter;
    nodes_.push_back(std::move(n));
    return NodeId{nodes_.size() - 1};
  }

  Node make(Op op, std::vector<NodeId> inputs) const {
    Node n;
    n.op = op;
    for (NodeId in : inputs) {
      if (in.index >= nodes_.size()) {
        throw ShapeError("node " + std::to_string(nodes_.size()) + " (" +
                         std::string(op_name(op)) + "): input " + std::to_string(in.index) +
                         " does not exist");
      }
      n.requires_grad = n.requires_grad || nodes_[in.index].requires_grad;
    }
    n.inputs = std::move(inputs);
    return n;
  }

  NodeId record(Op op, std::vector<NodeId> inputs) { return push(make(op, std::move(inputs))); }

  NodeId reduce(Op op, NodeId a, std::optional<std::size_t> axis) {
    Node n = make(op, {a});
    n.axis = axis;
    return push(std::move(n));
  }

  NodeId push(Node n) {
    nodes_.push_back(std::move(n));
    try {
      forward(nodes_.size() - 1);
    } catch (...) {
      nodes_.pop_back();
      throw;
    }
    return NodeId{nodes_.size() - 1};
  }

  [[noreturn]] void fail(std::size_t i, const std::string& what) const {
    throw ShapeError("node " + std::to_string(i) + " (" + std::string(op_name(nodes_[i].op)) +
                     "): " + what);
  }

  const Tensor& in(std::size_t i, std::size_t k) const {
    return nodes_[nodes_[i].inputs[k].index].value;
  }

  struct AxisSplit {
    std::size_t outer, len, inner;
    Shape reduced;
  };

  static AxisSplit split(const Shape& s, std::size_t axis) {
    AxisSplit r{1, s[axis], 1, {}};
    for (std::size_t d = 0; d < s.size(); ++d) {
      if (d < axis) r.outer *= s[d];
      if (d > axis) r.inner *= s[d];
      if (d != axis) r.reduced.push_back(s[d]);
    }
    return r;
  }

  // Output buffer for node i, reusing the previous allocation on replay.
  static Tensor& prepare(Node& n, const Shape& shape) {
    if (n.value.shape() != shape) n.value = Tensor(shape);
    return n.value;
  }

  void forward(std::size_t i) {
    Node& n = nodes_[i];
    switch (n.op) {
      case Op::Leaf:
        return;
      case Op::Add:
      case Op::Sub:
      case Op::Mul: {
        const Tensor& a = in(i, 0);
        const Tensor& b = in(i, 1);
        const bool same = a.shape() == b.shape();
        if (!same && !(n.op == Op::Add && b.rank() == 1 && a.rank() >= 1 && a.shape().back() == b.size())) {
          fail(i, "incompatible shapes " + to_string(a.shape()) + " and " + to_string(b.shape()));
        }
        Tensor& out = prepare(n, a.shape());
        if (same) {
          for (std::size_t k = 0; k < a.size(); ++k) {
            out[k] = n.op == Op::Add ? a[k] + b[k] : n.op == Op::Sub ? a[k] - b[k] : a[k] * b[k];
          }
        } else {
          const std::size_t w = b.size();
          for (std::size_t r = 0; r < a.size(); r += w) {
            for (std::size_t k = 0; k < w; ++k) out[r + k] = a[r + k] + b[k];
          }
        }
        return;
      }
      case Op::Scale: {
        const Tensor& a = in(i, 0);
        Tensor& out = prepare(n, a.shape());
        for (std::size_t k = 0; k < a.size(); ++k) out[k] = a[k] * n.scalar;
        return;
      }
      case Op::MatMul: {
        const Tensor& a = in(i, 0);
        const Tensor& b = in(i, 1);
        if (b.rank() != 2 || (a.rank() != 1 && a.rank() != 2)) {
          fail(i, "expects [M,K] or [K] times [K,N], got " + to_string(a.shape()) + " and " +
                      to_string(b.shape()));
        }
        const std::size_t m = a.rank() == 2 ? a.dim(0) : 1;
        const std::size_t k = a.shape().back();
        if (k != b.dim(0)) {
          fail(i, "inner dimensions differ: " + to_string(a.shape()) + " and " +
                      to_string(b.shape()));
        }
        const std::size_t cols = b.dim(1);
        Tensor& out = prepare(n, a.rank() == 2 ? Shape{m, cols} : Shape{cols});
        kernels::gemm(a.data(), b.data(), m, k, cols, nullptr, out.data());
        return;
      }
      case Op::Relu: {
        const Tensor& a = in(i, 0);
        Tensor& out = prepare(n, a.shape());
        for (std::size_t k = 0; k < a.size(); ++k) out[k] = a[k] > 0.0 ? a[k] : 0.0;
        return;
      }
      case Op::MaxReduce:
      case Op::MinReduce: {
        const Tensor& a = in(i, 0);
        if (!n.axis || *n.axis >= a.rank()) fail(i, "axis out of range for " + to_string(a.shape()));
        const AxisSplit s = split(a.shape(), *n.axis);
        Tensor& out = prepare(n, s.reduced);
        n.indices.assign(s.outer * s.inner, 0);
        const bool is_max = n.op == Op::MaxReduce;
        for (std::size_t o = 0; o < s.outer; ++o) {
          for (std::size_t in_ = 0; in_ < s.inner; ++in_) {
            const std::size_t base = o * s.len * s.inner + in_;
            std::size_t best = 0;
            double bv = a[base];
            for (std::size_t l = 1; l < s.len; ++l) {
              const double v = a[base + l * s.inner];
              if (is_max ? v > bv : v < bv) {
                bv = v;
                best = l;
              }
            }
            out[o * s.inner + in_] = bv;
            n.indices[o * s.inner + in_] = best;
          }
        }
        return;
      }
      case Op::SumReduce:
      case Op::MeanReduce: {
        const Tensor& a = in(i, 0);
        const bool mean = n.op == Op::MeanReduce;
        if (!n.axis) {
          const double total = exact_sum(a.data());
          n.value = Tensor::scalar(mean ? total / static_cast<double>(a.size()) : total);
          return;
        }
        if (*n.axis >= a.rank()) fail(i, "axis out of range for " + to_string(a.shape()));
        const AxisSplit s = split(a.shape(), *n.axis);
        Tensor& out = prepare(n, s.reduced);
        std::vector<double> buf(s.len);
        for (std::size_t o = 0; o < s.outer; ++o) {
          for (std::size_t in_ = 0; in_ < s.inner; ++in_) {
            for (std::size_t l = 0; l < s.len; ++l) buf[l] = a[(o * s.len + l) * s.inner + in_];
            const double total = exact_sum(buf);
            out[o * s.inner + in_] = mean ? total / static_cast<double>(s.len) : total;
          }
        }
        return;
      }
      case Op::Square: {
        const Tensor& a = in(i, 0);
        Tensor& out = prepare(n, a.shape());
        for (std::size_t k = 0; k < a.size(); ++k) out[k] = a[k] * a[k];
        return;
      }
      case Op::SqrtEps: {
        const Tensor& a = in(i, 0);
        for (double v : a.data()) {
          if (v + n.scalar < 0.0) fail(i, "negative argument");
        }
        Tensor& out = prepare(n, a.shape());
        for (std::size_t k = 0; k < a.size(); ++k) out[k] = std::sqrt(a[k] + n.scalar);
        return;
      }
      case Op::L2Norm: {
        const Tensor& a = in(i, 0);
        std::vector<double> sq(a.size());
        for (std::size_t k = 0; k < a.size(); ++k) sq[k] = a[k] * a[k];
        n.value = Tensor::scalar(std::sqrt(exact_sum(sq) + kSqrtEpsilon));
        return;
      }
      case Op::SoftmaxCrossEntropy: {
        const Tensor& a = in(i, 0);
        if (a.rank() != 1 && a.rank() != 2) fail(i, "logits must be [C] or [B,C]");
        const std::size_t rows = a.rank() == 2 ? a.dim(0) : 1;
        const std::size_t c = a.shape().back();
        if (n.indices.size() != rows) {
          fail(i, "expected " + std::to_string(rows) + " labels, got " +
                      std::to_string(n.indices.size()));
        }
        std::vector<double> losses(rows);
        for (std::size_t r = 0; r < rows; ++r) {
          if (n.indices[r] >= c) fail(i, "label " + std::to_string(n.indices[r]) + " out of range");
          const double* row = a.data().data() + r * c;
          const double mx = *std::max_element(row, row + c);
          double z = 0.0;
          for (std::size_t k = 0; k < c; ++k) z += std::exp(row[k] - mx);
          losses[r] = std::log(z) + mx - row[n.indices[r]];
        }
        n.value = Tensor::scalar(exact_sum(losses) / static_cast<double>(rows));
        return;
      }
      case Op::Softmax: {
        const Tensor& a = in(i, 0);
        if (a.rank() != 1) fail(i, "softmax expects a vector, got " + to_string(a.shape()));
        Tensor& out = prepare(n, a.shape());
        const double mx = *std::max_element(a.data().begin(), a.data().end());
        double z = 0.0;
        for (std::size_t k = 0; k < a.size(); ++k) {
          out[k] = std::exp(a[k] - mx);
          z += out[k];
        }
        for (double& v : out.data()) v /= z;
        return;
      }
      case Op::Gather: {
        const Tensor& a = in(i, 0);
        if (a.rank() == 0) fail(i, "cannot gather from a scalar");
        if (n.indices.empty()) fail(i, "empty index list");
        const std::size_t stride = a.size() / a.dim(0);
        Shape shape = a.shape();
        shape[0] = n.indices.size();
        for (std::size_t r : n.indices) {
          if (r >= a.dim(0)) fail(i, "row " + std::to_string(r) + " out of range " + to_string(a.shape()));
        }
        Tensor& out = prepare(n, shape);
        for (std::size_t r = 0; r < n.indices.size(); ++r) {
          std::copy_n(a.data().data() + n.indices[r] * stride, stride,
                      out.data().data() + r * stride);
        }
        return;
      }
      case Op::Concat: {
        if (n.inputs.empty()) fail(i, "nothing to concatenate");
        Shape shape = in(i, 0).shape();
        if (shape.empty()) fail(i, "cannot concatenate scalars");
        std::size_t rows = 0;
        for (std::size_t k = 0; k < n.inputs.size(); ++k) {
          const Shape& s = in(i, k).shape();
          if (s.size() != shape.size() || !std::equal(s.begin() + 1, s.end(), shape.begin() + 1)) {
            fail(i, "part " + std::to_string(k) + " has shape " + to_string(s) +
                        ", incompatible with " + to_string(shape));
          }
          rows += s[0];
        }
        shape[0] = rows;
        Tensor& out = prepare(n, shape);
        std::size_t offset = 0;
        for (std::size_t k = 0; k < n.inputs.size(); ++k) {
          const Tensor& p = in(i, k);
          std::copy(p.data().begin(), p.data().end(), out.data().begin() + static_cast<std::ptrdiff_t>(offset));
          offset += p.size();
        }
        return;
      }
      case Op::PairwiseSqDist: {
        const Tensor& a = in(i, 0);
        const Tensor& b = in(i, 1);
        if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(1)) {
          fail(i, "expects [N,D] and [M,D], got " + to_string(a.shape()) + " and " +
                      to_string(b.shape()));
        }
        const std::size_t rows = a.dim(0), cols = b.dim(0), d = a.dim(1);
        Tensor& out = prepare(n, Shape{rows, cols});
        for (std::size_t r = 0; r < rows; ++r) {
          const double* pa = a.data().data() + r * d;
          for (std::size_t c = 0; c < cols; ++c) {
            const double* pb = b.data().data() + c * d;
            double s = 0.0;
            for (std::size_t k = 0; k < d; ++k) {
              const double diff = pa[k] - pb[k];
              s += diff * diff;
            }
            out[r * cols + c] = s;
          }
        }
        return;
      }
      case Op::Reshape: {
        const Tensor& a = in(i, 0);
        if (element_count(n.target) != a.size()) {
          fail(i, "cannot reshape " + to_string(a.shape()) + " to " + to_string(n.target));
        }
        Tensor& out = prepare(n, n.target);
        std::copy(a.data().begin(), a.data().end(), out.data().begin());
        return;
      }
    }
  }

  // Accumulates the adjoint of node i into its inputs.
  void backward(std::size_t i, std::vector<Tensor>& adj, std::vector<bool>& live) const {
    const Node& n = nodes_[i];
    const Tensor& g = adj[i];
    auto wants = [&](std::size_t k) { return nodes_[n.inputs[k].index].requires_grad; };
    // Like target(), but leaves a first-touched adjoint uninitialized; the
    // caller must then assign every element instead of accumulating.
    auto claim = [&](std::size_t k, bool& fresh) -> Tensor& {
      const std::size_t j = n.inputs[k].index;
      fresh = !live[j];
      if (fresh) {
        if (adj[j].shape() != nodes_[j].value.shape()) adj[j] = Tensor(nodes_[j].value.shape());
        live[j] = true;
      }
      return adj[j];
    };
    auto target = [&](std::size_t k) -> Tensor& {
      const std::size_t j = n.inputs[k].index;
      if (!live[j]) {
        if (adj[j].shape() == nodes_[j].value.shape()) {
          adj[j].fill(0.0);
        } else {
          adj[j] = Tensor(nodes_[j].value.shape(), 0.0);
        }
        live[j] = true;
      }
      return adj[j];
    };

    switch (n.op) {
      case Op::Leaf:
        return;
      case Op::Add:
      case Op::Sub: {
        const double sign = n.op == Op::Sub ? -1.0 : 1.0;
        if (wants(0)) {
          bool fresh = false;
          Tensor& t = claim(0, fresh);
          if (fresh) {
            std::copy(g.data().begin(), g.data().end(), t.data().begin());
          } else {
            for (std::size_t k = 0; k < g.size(); ++k) t[k] += g[k];
          }
        }
        if (wants(1)) {
          Tensor& t = target(1);
          const std::size_t w = t.size();
          for (std::size_t r = 0; r < g.size(); r += w) {
            for (std::size_t k = 0; k < w; ++k) t[k] += sign * g[r + k];
          }
        }
        return;
      }
      case Op::Mul: {
        const Tensor& a = in(i, 0);
        const Tensor& b = in(i, 1);
        if (wants(0)) {
          Tensor& t = target(0);
          for (std::size_t k = 0; k < g.size(); ++k) t[k] += g[k] * b[k];
        }
        if (wants(1)) {
          Tensor& t = target(1);
          for (std::size_t k = 0; k < g.size(); ++k) t[k] += g[k] * a[k];
        }
        return;
      }
      case Op::Scale: {
        Tensor& t = target(0);
        for (std::size_t k = 0; k < g.size(); ++k) t[k] += n.scalar * g[k];
        return;
      }
      case Op::MatMul:
        matmul_backward(i, g, wants(0) ? &target(0) : nullptr, wants(1) ? &target(1) : nullptr);
        return;
      case Op::Relu: {
        const Tensor& a = in(i, 0);
        bool fresh = false;
        Tensor& t = claim(0, fresh);
        if (fresh) {
          for (std::size_t k = 0; k < g.size(); ++k) t[k] = a[k] > 0.0 ? g[k] : 0.0;
        } else {
          for (std::size_t k = 0; k < g.size(); ++k) t[k] += a[k] > 0.0 ? g[k] : 0.0;
        }
        return;
      }
      case Op::MaxReduce:
      case Op::MinReduce: {
        const Tensor& a = in(i, 0);
        const AxisSplit s = split(a.shape(), *n.axis);
        Tensor& t = target(0);
        for (std::size_t o = 0; o < s.outer; ++o) {
          for (std::size_t in_ = 0; in_ < s.inner; ++in_) {
            const std::size_t r = o * s.inner + in_;
            t[(o * s.len + n.indices[r]) * s.inner + in_] += g[r];
          }
        }
        return;
      }
      case Op::SumReduce:
      case Op::MeanReduce: {
        const Tensor& a = in(i, 0);
        Tensor& t = target(0);
        if (!n.axis) {
          const double v = n.op == Op::MeanReduce ? g[0] / static_cast<double>(a.size()) : g[0];
          for (double& x : t.data()) x += v;
          return;
        }
        const AxisSplit s = split(a.shape(), *n.axis);
        const double f = n.op == Op::MeanReduce ? 1.0 / static_cast<double>(s.len) : 1.0;
        for (std::size_t o = 0; o < s.outer; ++o) {
          for (std::size_t l = 0; l < s.len; ++l) {
            for (std::size_t in_ = 0; in_ < s.inner; ++in_) {
              t[(o * s.len + l) * s.inner + in_] += g[o * s.inner + in_] * f;
            }
          }
        }
        return;
      }
      case Op::Square: {
        const Tensor& a = in(i, 0);
        Tensor& t = target(0);
        for (std::size_t k = 0; k < g.size(); ++k) t[k] += 2.0 * a[k] * g[k];
        return;
      }
      case Op::SqrtEps: {
        Tensor& t = target(0);
        for (std::size_t k = 0; k < g.size(); ++k) t[k] += g[k] / (2.0 * n.value[k]);
        return;
      }
      case Op::L2Norm: {
        const Tensor& a = in(i, 0);
        Tensor& t = target(0);
        const double f = g[0] / n.value[0];
        for (std::size_t k = 0; k < a.size(); ++k) t[k] += f * a[k];
        return;
      }
      case Op::SoftmaxCrossEntropy: {
        const Tensor& a = in(i, 0);
        Tensor& t = target(0);
        const std::size_t rows = n.indices.size();
        const std::size_t c = a.shape().back();
        const double f = g[0] / static_cast<double>(rows);
        for (std::size_t r = 0; r < rows; ++r) {
          const double* row = a.data().data() + r * c;
          const double mx = *std::max_element(row, row + c);
          double z = 0.0;
          for (std::size_t k = 0; k < c; ++k) z += std::exp(row[k] - mx);
          for (std::size_t k = 0; k < c; ++k) {
            const double p = std::exp(row[k] - mx) / z;
            t[r * c + k] += f * (p - (k == n.indices[r] ? 1.0 : 0.0));
          }
        }
        return;
      }
      case Op::Softmax: {
        Tensor& t = target(0);
        double dot = 0.0;
        for (std::size_t k = 0; k < g.size(); ++k) dot += g[k] * n.value[k];
        for (std::size_t k = 0; k < g.size(); ++k) t[k] += n.value[k] * (g[k] - dot);
        return;
      }
      case Op::Gather: {
        const Tensor& a = in(i, 0);
        Tensor& t = target(0);
        const std::size_t stride = a.size() / a.dim(0);
        for (std::size_t r = 0; r < n.indices.size(); ++r) {
          for (std::size_t k = 0; k < stride; ++k) t[n.indices[r] * stride + k] += g[r * stride + k];
        }
        return;
      }
      case Op::Concat: {
        std::size_t offset = 0;
        for (std::size_t k = 0; k < n.inputs.size(); ++k) {
          const std::size_t len = in(i, k).size();
          if (wants(k)) {
            Tensor& t = target(k);
            for (std::size_t e = 0; e < len; ++e) t[e] += g[offset + e];
          }
          offset += len;
        }
        return;
      }
      case Op::PairwiseSqDist: {
        const Tensor& a = in(i, 0);
        const Tensor& b = in(i, 1);
        const std::size_t rows = a.dim(0), cols = b.dim(0), d = a.dim(1);
        Tensor* ta = wants(0) ? &target(0) : nullptr;
        Tensor* tb = wants(1) ? &target(1) : nullptr;
        for (std::size_t r = 0; r < rows; ++r) {
          for (std::size_t c = 0; c < cols; ++c) {
            const double w = g[r * cols + c];
            if (w == 0.0) continue;
            for (std::size_t k = 0; k < d; ++k) {
              const double diff = 2.0 * w * (a[r * d + k] - b[c * d + k]);
              if (ta) (*ta)[r * d + k] += diff;
              if (tb) (*tb)[c * d + k] -= diff;
            }
          }
        }
        return;
      }
      case Op::Reshape: {
        Tensor& t = target(0);
        for (std::size_t k = 0; k < g.size(); ++k) t[k] += g[k];
        return;
      }
    }
  }

  // dA = dC * B^T and dB = A^T * dC, restricted to the rows of dC that carry
  // any signal. Max-pooled networks leave most rows zero.
  void matmul_backward(std::size_t i, const Tensor& g, Tensor* da, Tensor* db) const {
    const Tensor& a = in(i, 0);
    const Tensor& b = in(i, 1);
    const std::size_t m = a.rank() == 2 ? a.dim(0) : 1;
    const std::size_t k = a.shape().back();
    const std::size_t cols = b.dim(1);

    std::vector<std::size_t> rows;
    rows.reserve(m);
    for (std::size_t r = 0; r < m; ++r) {
      const double* gr = g.data().data() + r * cols;
      if (std::any_of(gr, gr + cols, [](double v) { return v != 0.0; })) rows.push_back(r);
    }
    if (rows.empty()) return;
    const std::size_t live_rows = rows.size();

    std::vector<double> packed;
    std::span<const double> g_live = g.data();
    if (live_rows < m) {
      packed.resize(live_rows * cols);
      for (std::size_t r = 0; r < live_rows; ++r) {
        std::copy_n(g.data().data() + rows[r] * cols, cols, packed.data() + r * cols);
      }
      g_live = packed;
    }

    if (da) {
      const Node& bn = nodes_[nodes_[i].inputs[1].index];
      std::vector<double> scratch;
      const std::vector<double>* bt = &scratch;
      if (bn.op == Op::Leaf) {
        if (bn.transposed.empty()) bn.transposed = kernels::transpose(b.data(), k, cols);
        bt = &bn.transposed;
      } else {
        scratch = kernels::transpose(b.data(), k, cols);
      }
      std::vector<double> prod(live_rows * k);
      kernels::gemm(g_live, *bt, live_rows, cols, k, nullptr, prod);
      for (std::size_t r = 0; r < live_rows; ++r) {
        double* dst = da->data().data() + rows[r] * k;
        for (std::size_t c = 0; c < k; ++c) dst[c] += prod[r * k + c];
      }
    }
    if (db) {
      std::vector<double> at(k * live_rows);
      for (std::size_t r = 0; r < live_rows; ++r) {
        for (std::size_t c = 0; c < k; ++c) at[c * live_rows + r] = a[rows[r] * k + c];
      }
      std::vector<double> prod(k * cols);
      kernels::gemm(at, g_live, k, live_rows, cols, nullptr, prod);
      for (std::size_t e = 0; e < prod.size(); ++e) (*db)[e] += prod[e];
    }
  }

  std::vector<Node> nodes_;
  mutable std::vector<Tensor> adjoints_;  // scratch reused across gradient() calls
};

/// Binds the given leaves, replays the tape and returns every node value in
/// recording order.
inline std::vector<Tensor> evaluate(Tape& tape, const Tape::Bindings& inputs) {
  tape.evaluate(inputs);
  std::vector<Tensor> values;
  values.reserve(tape.size());
  for (std::size_t i = 0; i < tape.size(); ++i) values.push_back(tape.value(NodeId{i}));
  return values;
}

inline Tape::Gradients gradient(const Tape& tape, NodeId loss) { return tape.gradient(loss); }

/// Compares reverse-mode adjoints of every parameter against central
/// differences. Returns the largest |a - n| / max(|a|, |n|) over coordinates
/// where |a| + |n| > 1e-8. The tape is left evaluated at its original values.
inline double finite_difference_check(Tape& tape, NodeId loss, double epsilon) {
  if (!(epsilon > 0.0)) throw std::invalid_argument("finite_difference_check: epsilon must be > 0");
  tape.evaluate();
  const Tape::Gradients analytic = tape.gradient(loss);
  double worst = 0.0;
  for (const auto& [id, grad] : analytic) {
    Tensor base = tape.value(id);
    for (std::size_t k = 0; k < base.size(); ++k) {
      Tensor probe = base;
      probe[k] = base[k] + epsilon;
      tape.set(id, probe);
      tape.evaluate();
      const double up = tape.value(loss).item();
      probe[k] = base[k] - epsilon;
      tape.set(id, probe);
      tape.evaluate();
      const double down = tape.value(loss).item();
      const double numeric = (up - down) / (2.0 * epsilon);
      const double a = grad[k];
      if (std::fabs(a) + std::fabs(numeric) > 1e-8) {
        worst = std::max(worst, std::fabs(a - numeric) / std::max(std::fabs(a), std::fabs(numeric)));
      }
    }
    tape.set(id, base);
  }
  tape.evaluate();
  return worst;
}

}  // namespace shapeadv
