// SPDX-License-Identifier: Apache-2.0
//
// Reverse-mode differentiation over a recorded tape. Every operation appends a
// node holding its value and a closure that pushes the node's gradient to its
// parents. Nodes are appended in evaluation order, so walking the tape
// backwards is a valid reverse topological order.
#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace octsr {

using Shape = std::vector<std::int64_t>;

std::int64_t shape_numel(const Shape& s);
std::string shape_string(const Shape& s);

struct Tensor {
  Shape shape;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(Shape s, double fill = 0.0);
  Tensor(Shape s, std::vector<double> d);

  std::int64_t numel() const { return static_cast<std::int64_t>(data.size()); }
  std::int64_t dim(std::size_t i) const { return shape.at(i); }
  static Tensor scalar(double v) { return Tensor(Shape{}, std::vector<double>{v}); }
};

/// A named trainable tensor. Values and gradients are double precision; the
/// trainer keeps values representable in single precision so checkpoints are
/// lossless.
struct Param {
  std::string name;
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;
  bool trainable = true;
  int stage = 0;  // progressive-growing stage that owns the tensor; 0 = shared

  Param() = default;
  Param(std::string n, Shape s, double fill = 0.0);
  std::int64_t numel() const { return static_cast<std::int64_t>(value.size()); }
  void zero_grad();
};

struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, int self)>;

  Var constant(Tensor t);
  /// Leaf whose gradient is kept after backward().
  Var input(Tensor t, bool requires_grad = true);
  /// Leaf bound to a parameter. Gradients reach the parameter only through
  /// accumulate_param_grads(). A frozen or non-trainable parameter enters as
  /// a constant.
  Var param(Param& p, bool requires_grad = true);

  /// Appends an op node. `fn` is dropped when no parent needs a gradient.
  Var record(Tensor value, std::vector<Var> parents, BackwardFn fn);

  const Tensor& value(Var v) const { return node(v).value; }
  const Shape& shape(Var v) const { return node(v).value.shape; }
  double scalar(Var v) const;
  bool requires_grad(Var v) const { return node(v).requires_grad; }
  const std::vector<Var>& parents(int id) const { return nodes_.at(static_cast<std::size_t>(id)).parents; }

  /// Gradient buffer of a node, allocated (zeroed) on first use.
  std::vector<double>& grad_mut(Var v);
  /// Gradient after backward(); empty when no gradient reached the node.
  const std::vector<double>& grad(Var v) const { return node(v).grad; }
  /// Gradient or zeros of the node's size.
  std::vector<double> grad_or_zero(Var v) const;

  /// Seeds d(out)/d(out) = 1 for a scalar and walks the tape backwards.
  void backward(Var out);
  /// Adds every parameter leaf's gradient into Param::grad.
  void accumulate_param_grads() const;

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    std::vector<double> grad;
    std::vector<Var> parents;
    BackwardFn backward;
    bool requires_grad = false;
    Param* param = nullptr;
  };
  const Node& node(Var v) const { return nodes_.at(static_cast<std::size_t>(v.id)); }
  Node& node(Var v) { return nodes_.at(static_cast<std::size_t>(v.id)); }

  std::vector<Node> nodes_;
};

// ---------------------------------------------------------------------------
// Generic operations. Shapes must match exactly where two operands are taken.

Var add(Tape& t, Var a, Var b);
Var sub(Tape& t, Var a, Var b);
Var scale(Tape& t, Var a, double s);
/// alpha * a + beta * b
Var lincomb(Tape& t, double alpha, Var a, double beta, Var b);
Var mul(Tape& t, Var a, Var b);
/// Elementwise product with a constant tensor of the same shape.
Var mul_const(Tape& t, Var a, const std::vector<double>& k);
Var square(Tape& t, Var a);
Var sum(Tape& t, Var a);
Var mean(Tape& t, Var a);
Var reshape(Tape& t, Var a, Shape s);
/// Concatenates [n_i, C] row blocks into [sum n_i, C].
Var concat_rows(Tape& t, std::span<const Var> parts);
/// out[i, :] = a[index[i], :] for a of shape [N, C]; backward scatter-adds.
Var gather_rows(Tape& t, Var a, std::vector<std::int64_t> index, Shape out_shape = {});
/// Column c of an [N, C] tensor, shape [N].
Var select_column(Tape& t, Var a, int c);
/// Value is `value`; gradient flows to `surrogate` unchanged. Used where a
/// scalar's gradient is produced by a different expression than its value.
Var with_value(Tape& t, Var surrogate, double value);
Var relu(Tape& t, Var a);

}  // namespace octsr
