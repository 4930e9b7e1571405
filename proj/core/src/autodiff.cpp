// SPDX-License-Identifier: Apache-2.0
#include "octsr/autodiff.hpp"

#include <algorithm>
#include <sstream>

#include "octsr/error.hpp"

namespace octsr {

std::int64_t shape_numel(const Shape& s) {
  std::int64_t n = 1;
  for (auto d : s) n *= d;
  return n;
}

std::string shape_string(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << "]";
  return os.str();
}

Tensor::Tensor(Shape s, double fill) : shape(std::move(s)) {
  data.assign(static_cast<std::size_t>(shape_numel(shape)), fill);
}

Tensor::Tensor(Shape s, std::vector<double> d) : shape(std::move(s)), data(std::move(d)) {
  if (static_cast<std::int64_t>(data.size()) != shape_numel(shape))
    throw ShapeError("tensor data size " + std::to_string(data.size()) + " does not match shape " +
                     shape_string(shape));
}

Param::Param(std::string n, Shape s, double fill) : name(std::move(n)), shape(std::move(s)) {
  value.assign(static_cast<std::size_t>(shape_numel(shape)), fill);
  grad.assign(value.size(), 0.0);
}

void Param::zero_grad() { std::fill(grad.begin(), grad.end(), 0.0); }

// ---------------------------------------------------------------------------

Var Tape::constant(Tensor t) {
  Node n;
  n.value = std::move(t);
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size() - 1)};
}

Var Tape::input(Tensor t, bool requires_grad) {
  Node n;
  n.value = std::move(t);
  n.requires_grad = requires_grad;
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size() - 1)};
}

Var Tape::param(Param& p, bool requires_grad) {
  Node n;
  n.value = Tensor(p.shape, p.value);
  n.requires_grad = requires_grad && p.trainable;
  n.param = n.requires_grad ? &p : nullptr;
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size() - 1)};
}

Var Tape::record(Tensor value, std::vector<Var> parents, BackwardFn fn) {
  Node n;
  n.value = std::move(value);
  for (Var p : parents) n.requires_grad = n.requires_grad || node(p).requires_grad;
  n.parents = std::move(parents);
  if (n.requires_grad) n.backward = std::move(fn);
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size() - 1)};
}

double Tape::scalar(Var v) const {
  const auto& t = node(v).value;
  if (t.data.size() != 1) throw ShapeError("expected a scalar, got shape " + shape_string(t.shape));
  return t.data[0];
}

std::vector<double>& Tape::grad_mut(Var v) {
  auto& n = node(v);
  if (n.grad.empty()) n.grad.assign(n.value.data.size(), 0.0);
  return n.grad;
}

std::vector<double> Tape::grad_or_zero(Var v) const {
  const auto& n = node(v);
  if (n.grad.empty()) return std::vector<double>(n.value.data.size(), 0.0);
  return n.grad;
}

void Tape::backward(Var out) {
  if (node(out).value.data.size() != 1) throw ShapeError("backward() needs a scalar output");
  if (!node(out).requires_grad) return;
  grad_mut(out)[0] += 1.0;
  for (int i = out.id; i >= 0; --i) {
    auto& n = nodes_[static_cast<std::size_t>(i)];
    if (n.backward && !n.grad.empty()) n.backward(*this, i);
  }
}

void Tape::accumulate_param_grads() const {
  for (const auto& n : nodes_) {
    if (!n.param || n.grad.empty()) continue;
    for (std::size_t i = 0; i < n.grad.size(); ++i) n.param->grad[i] += n.grad[i];
  }
}

// ---------------------------------------------------------------------------

namespace {

void require_same_shape(const Tape& t, Var a, Var b, const char* op) {
  if (t.shape(a) != t.shape(b))
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_string(t.shape(a)) + " vs " +
                     shape_string(t.shape(b)));
}

// Adds s * g into the gradient of `target` if it needs one.
void push_scaled(Tape& t, Var target, const std::vector<double>& g, double s) {
  if (!t.requires_grad(target)) return;
  auto& d = t.grad_mut(target);
  for (std::size_t i = 0; i < g.size(); ++i) d[i] += s * g[i];
}

}  // namespace

Var lincomb(Tape& t, double alpha, Var a, double beta, Var b) {
  require_same_shape(t, a, b, "lincomb");
  const auto& va = t.value(a).data;
  const auto& vb = t.value(b).data;
  Tensor out(t.shape(a));
  for (std::size_t i = 0; i < va.size(); ++i) out.data[i] = alpha * va[i] + beta * vb[i];
  return t.record(std::move(out), {a, b}, [a, b, alpha, beta](Tape& tp, int self) {
    const auto g = tp.grad(Var{self});
    push_scaled(tp, a, g, alpha);
    push_scaled(tp, b, g, beta);
  });
}

Var add(Tape& t, Var a, Var b) { return lincomb(t, 1.0, a, 1.0, b); }
Var sub(Tape& t, Var a, Var b) { return lincomb(t, 1.0, a, -1.0, b); }

Var scale(Tape& t, Var a, double s) {
  Tensor out = t.value(a);
  for (auto& v : out.data) v *= s;
  return t.record(std::move(out), {a}, [a, s](Tape& tp, int self) { push_scaled(tp, a, tp.grad(Var{self}), s); });
}

Var mul(Tape& t, Var a, Var b) {
  require_same_shape(t, a, b, "mul");
  const auto& va = t.value(a).data;
  const auto& vb = t.value(b).data;
  Tensor out(t.shape(a));
  for (std::size_t i = 0; i < va.size(); ++i) out.data[i] = va[i] * vb[i];
  return t.record(std::move(out), {a, b}, [a, b](Tape& tp, int self) {
    const auto& g = tp.grad(Var{self});
    if (tp.requires_grad(a)) {
      const auto& vb2 = tp.value(b).data;
      auto& d = tp.grad_mut(a);
      for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i] * vb2[i];
    }
    if (tp.requires_grad(b)) {
      const auto& va2 = tp.value(a).data;
      auto& d = tp.grad_mut(b);
      for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i] * va2[i];
    }
  });
}

Var mul_const(Tape& t, Var a, const std::vector<double>& k) {
  const auto& va = t.value(a).data;
  if (k.size() != va.size()) throw ShapeError("mul_const: size mismatch");
  Tensor out(t.shape(a));
  for (std::size_t i = 0; i < va.size(); ++i) out.data[i] = va[i] * k[i];
  return t.record(std::move(out), {a}, [a, k](Tape& tp, int self) {
    const auto& g = tp.grad(Var{self});
    auto& d = tp.grad_mut(a);
    for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i] * k[i];
  });
}

Var square(Tape& t, Var a) {
  Tensor out = t.value(a);
  for (auto& v : out.data) v *= v;
  return t.record(std::move(out), {a}, [a](Tape& tp, int self) {
    const auto& g = tp.grad(Var{self});
    const auto& va2 = tp.value(a).data;
    auto& d = tp.grad_mut(a);
    for (std::size_t i = 0; i < g.size(); ++i) d[i] += 2.0 * va2[i] * g[i];
  });
}

Var sum(Tape& t, Var a) {
  double s = 0.0;
  for (double v : t.value(a).data) s += v;
  return t.record(Tensor::scalar(s), {a}, [a](Tape& tp, int self) {
    const double g = tp.grad(Var{self})[0];
    auto& d = tp.grad_mut(a);
    for (auto& v : d) v += g;
  });
}

Var mean(Tape& t, Var a) {
  const auto n = t.value(a).numel();
  if (n == 0) throw ShapeError("mean of an empty tensor");
  return scale(t, sum(t, a), 1.0 / static_cast<double>(n));
}

Var reshape(Tape& t, Var a, Shape s) {
  if (shape_numel(s) != t.value(a).numel())
    throw ShapeError("reshape " + shape_string(t.shape(a)) + " -> " + shape_string(s));
  Tensor out(std::move(s), t.value(a).data);
  return t.record(std::move(out), {a}, [a](Tape& tp, int self) { push_scaled(tp, a, tp.grad(Var{self}), 1.0); });
}

Var concat_rows(Tape& t, std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat_rows needs at least one part");
  const std::int64_t c = t.shape(parts[0]).at(1);
  std::int64_t rows = 0;
  for (Var p : parts) {
    const auto& s = t.shape(p);
    if (s.size() != 2 || s[1] != c) throw ShapeError("concat_rows: parts must be [n, " + std::to_string(c) + "]");
    rows += s[0];
  }
  Tensor out(Shape{rows, c});
  std::size_t at = 0;
  for (Var p : parts) {
    const auto& d = t.value(p).data;
    std::copy(d.begin(), d.end(), out.data.begin() + static_cast<std::ptrdiff_t>(at));
    at += d.size();
  }
  std::vector<Var> ps(parts.begin(), parts.end());
  return t.record(std::move(out), ps, [ps](Tape& tp, int self) {
    const auto& g = tp.grad(Var{self});
    std::size_t at2 = 0;
    for (Var p : ps) {
      const std::size_t n = tp.value(p).data.size();
      if (tp.requires_grad(p)) {
        auto& d = tp.grad_mut(p);
        for (std::size_t i = 0; i < n; ++i) d[i] += g[at2 + i];
      }
      at2 += n;
    }
  });
}

Var gather_rows(Tape& t, Var a, std::vector<std::int64_t> index, Shape out_shape) {
  const auto& s = t.shape(a);
  if (s.size() != 2) throw ShapeError("gather_rows expects an [N, C] tensor");
  const std::int64_t n = s[0], c = s[1];
  for (auto i : index)
    if (i < 0 || i >= n) throw ShapeError("gather_rows index out of range");
  const auto m = static_cast<std::int64_t>(index.size());
  if (out_shape.empty()) out_shape = {m, c};
  if (shape_numel(out_shape) != m * c) throw ShapeError("gather_rows: bad output shape");
  Tensor out(out_shape);
  const auto& va = t.value(a).data;
  for (std::int64_t r = 0; r < m; ++r)
    std::copy_n(va.begin() + index[static_cast<std::size_t>(r)] * c, c, out.data.begin() + r * c);
  return t.record(std::move(out), {a}, [a, c, index = std::move(index)](Tape& tp, int self) {
    const auto& g = tp.grad(Var{self});
    auto& d = tp.grad_mut(a);
    for (std::size_t r = 0; r < index.size(); ++r) {
      double* dst = d.data() + index[r] * c;
      const double* src = g.data() + static_cast<std::int64_t>(r) * c;
      for (std::int64_t k = 0; k < c; ++k) dst[k] += src[k];
    }
  });
}

Var select_column(Tape& t, Var a, int col) {
  const auto& s = t.shape(a);
  if (s.size() != 2 || col < 0 || col >= s[1]) throw ShapeError("select_column: bad column");
  const std::int64_t n = s[0], c = s[1];
  Tensor out(Shape{n});
  const auto& va = t.value(a).data;
  for (std::int64_t i = 0; i < n; ++i) out.data[static_cast<std::size_t>(i)] = va[static_cast<std::size_t>(i * c + col)];
  return t.record(std::move(out), {a}, [a, c, col](Tape& tp, int self) {
    const auto& g = tp.grad(Var{self});
    auto& d = tp.grad_mut(a);
    for (std::size_t i = 0; i < g.size(); ++i) d[i * static_cast<std::size_t>(c) + static_cast<std::size_t>(col)] += g[i];
  });
}

Var with_value(Tape& t, Var surrogate, double value) {
  if (t.value(surrogate).numel() != 1) throw ShapeError("with_value expects a scalar surrogate");
  return t.record(Tensor::scalar(value), {surrogate}, [surrogate](Tape& tp, int self) {
    push_scaled(tp, surrogate, tp.grad(Var{self}), 1.0);
  });
}

Var relu(Tape& t, Var a) {
  Tensor out = t.value(a);
  for (auto& v : out.data) v = v > 0.0 ? v : 0.0;
  return t.record(std::move(out), {a}, [a](Tape& tp, int self) {
    const auto& g = tp.grad(Var{self});
    const auto& va2 = tp.value(a).data;
    auto& d = tp.grad_mut(a);
    for (std::size_t i = 0; i < g.size(); ++i)
      if (va2[i] > 0.0) d[i] += g[i];
  });
}

}  // namespace octsr
