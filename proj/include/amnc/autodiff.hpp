#pragma once

// Reverse-accumulation tape over a closed catalogue of dense primitives.
//
// A Tape owns every value produced during one forward pass. Primitives append
// a node holding the output and a backward closure; Tape::backward walks the
// nodes in exact reverse order of recording. Only parameters (registered by
// name) keep their gradients after backward; intermediate gradients are
// released as soon as they have been propagated.
//
// All primitives work on matrices (rank-2 tensors). Scalars are 1x1.

#include <cmath>
#include <cstddef>
#include <deque>
#include <functional>
#include <map>
#include <numbers>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "amnc/kernels.hpp"
#include "amnc/tensor.hpp"

namespace amnc {

template <class T>
class Tape;

template <class T>
class Var {
 public:
  Var() = default;
  Var(Tape<T>* tape, std::size_t id) : tape_(tape), id_(id) {}

  const Tensor<T>& value() const { return tape_->value(id_); }
  Tape<T>& tape() const { return *tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  Tape<T>* tape_ = nullptr;
  std::size_t id_ = 0;
};

template <class T>
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::size_t)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var<T> constant(Tensor<T> value) { return push(std::move(value), {}, nullptr, false, false, {}); }

  /// Registers a trainable tensor; its gradient is retained under `name`.
  Var<T> parameter(std::string name, Tensor<T> value) {
    if (!value.all_finite()) throw ArgumentError("parameter '" + name + "' has non-finite values");
    return push(std::move(value), {}, nullptr, true, true, std::move(name));
  }

  Var<T> record(Tensor<T> value, std::vector<std::size_t> inputs, BackwardFn backward) {
    bool needs = false;
    for (auto in : inputs) needs = needs || nodes_.at(in).needs_grad;
    return push(std::move(value), std::move(inputs), std::move(backward), needs, false, {});
  }

  const Tensor<T>& value(std::size_t id) const { return nodes_.at(id).value; }
  bool needs_grad(std::size_t id) const { return nodes_.at(id).needs_grad; }

  /// Upstream gradient of node `id`, valid inside its backward closure.
  const Tensor<T>& upstream(std::size_t id) const { return nodes_[id].grad; }

  void accumulate(std::size_t id, const Tensor<T>& g) {
    Node& n = nodes_.at(id);
    if (!n.needs_grad) return;
    if (g.shape() != n.value.shape()) {
      throw ShapeError("gradient " + shape_string(g.shape()) + " for value " +
                       shape_string(n.value.shape()));
    }
    if (n.grad.empty()) {
      n.grad = g;
      return;
    }
    for (std::size_t i = 0; i < g.size(); ++i) n.grad[i] += g[i];
  }

  /// Seeds d(root)/d(root) = 1 elementwise (i.e. differentiates the sum of root)
  /// and propagates to every parameter.
  void backward(Var<T> root) {
    if (&root.tape() != this) throw ArgumentError("backward: variable from another tape");
    order_.clear();
    for (auto& n : nodes_) n.grad = Tensor<T>();
    Node& r = nodes_.at(root.id());
    if (!r.needs_grad) return;
    accumulate(root.id(), Tensor<T>(r.value.shape(), T{1}));
    for (std::size_t id = root.id() + 1; id-- > 0;) {
      Node& n = nodes_[id];
      if (!n.backward || n.grad.empty()) continue;
      order_.push_back(id);
      n.backward(*this, id);
      if (!n.trainable) n.grad = Tensor<T>();
    }
  }

  std::map<std::string, Tensor<T>> gradients() const {
    std::map<std::string, Tensor<T>> out;
    for (const auto& n : nodes_) {
      if (n.trainable) out[n.name] = n.grad.empty() ? Tensor<T>(n.value.shape()) : n.grad;
    }
    return out;
  }

  std::optional<Tensor<T>> gradient(Var<T> v) const {
    const Node& n = nodes_.at(v.id());
    if (!n.trainable) return std::nullopt;
    return n.grad.empty() ? Tensor<T>(n.value.shape()) : n.grad;
  }

  /// Node ids whose backward closures ran during the last backward().
  const std::vector<std::size_t>& last_backward_order() const { return order_; }

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor<T> value;
    Tensor<T> grad;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
    bool needs_grad = false;
    bool trainable = false;
    std::string name;
  };

  Var<T> push(Tensor<T> value, std::vector<std::size_t> inputs, BackwardFn backward, bool needs,
              bool trainable, std::string name) {
    nodes_.push_back(Node{std::move(value), Tensor<T>(), std::move(inputs),
                          needs ? std::move(backward) : BackwardFn{}, needs, trainable,
                          std::move(name)});
    return Var<T>(this, nodes_.size() - 1);
  }

  std::deque<Node> nodes_;  // stable references to values across pushes
  std::vector<std::size_t> order_;
};

namespace detail {

template <class T>
Tape<T>& same_tape(std::initializer_list<Var<T>> vars) {
  Tape<T>* tape = nullptr;
  for (const auto& v : vars) {
    if (!v.valid()) throw ArgumentError("uninitialised variable");
    if (tape && tape != &v.tape()) throw ArgumentError("variables recorded on different tapes");
    tape = &v.tape();
  }
  return *tape;
}

template <class T>
void require_matrix(const Tensor<T>& t, const char* op) {
  if (t.rank() != 2) throw ShapeError(std::string(op) + ": expected a matrix, got " + shape_string(t.shape()));
}

template <class T>
Tensor<T> matmul_values(const Tensor<T>& a, const Tensor<T>& b) {
  Tensor<T> out({a.rows(), b.cols()});
  kernels::parallel::matmul<T>(a.data(), b.data(), out.data(), a.rows(), a.cols(), b.cols());
  return out;
}

// b broadcasts against a along any axis where b's extent is 1.
template <class T>
void require_broadcast(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  require_matrix(a, op);
  require_matrix(b, op);
  const bool rows_ok = b.rows() == a.rows() || b.rows() == 1;
  const bool cols_ok = b.cols() == a.cols() || b.cols() == 1;
  if (!rows_ok || !cols_ok) {
    throw ShapeError(std::string(op) + ": cannot broadcast " + shape_string(b.shape()) + " to " +
                     shape_string(a.shape()));
  }
}

// Elementwise a (op) b with broadcasting of b. `f` computes the value,
// `da`/`db` the local partials given (a, b, out).
template <class T, class F, class DA, class DB>
Var<T> broadcast_binary(Var<T> a, Var<T> b, const char* name, F f, DA da, DB db) {
  Tape<T>& tape = same_tape<T>({a, b});
  const Tensor<T>& av = a.value();
  const Tensor<T>& bv = b.value();
  require_broadcast(av, bv, name);
  const std::size_t m = av.rows(), n = av.cols();
  const std::size_t br = bv.rows() == 1 ? 0 : 1, bc = bv.cols() == 1 ? 0 : 1;
  Tensor<T> out({m, n});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out(i, j) = f(av(i, j), bv(i * br, j * bc));
  const std::size_t ia = a.id(), ib = b.id();
  return tape.record(std::move(out), {ia, ib}, [=](Tape<T>& t, std::size_t self) {
    const Tensor<T>& g = t.upstream(self);
    const Tensor<T>& x = t.value(ia);
    const Tensor<T>& y = t.value(ib);
    const Tensor<T>& z = t.value(self);
    Tensor<T> ga(x.shape()), gb(y.shape());
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        const T yv = y(i * br, j * bc);
        ga(i, j) = g(i, j) * da(x(i, j), yv, z(i, j));
        gb(i * br, j * bc) += g(i, j) * db(x(i, j), yv, z(i, j));
      }
    }
    t.accumulate(ia, ga);
    t.accumulate(ib, gb);
  });
}

}  // namespace detail

/// a[m x n] * b[n x p]. Backward: dA = G Bt, dB = At G.
template <class T>
Var<T> matmul(Var<T> a, Var<T> b) {
  Tape<T>& tape = detail::same_tape<T>({a, b});
  const Tensor<T>& av = a.value();
  const Tensor<T>& bv = b.value();
  if (av.rank() != 2 || bv.rank() != 2 || av.cols() != bv.rows()) {
    throw ShapeError("matmul: " + shape_string(av.shape()) + " x " + shape_string(bv.shape()));
  }
  const std::size_t ia = a.id(), ib = b.id();
  return tape.record(detail::matmul_values(av, bv), {ia, ib}, [=](Tape<T>& t, std::size_t self) {
    const Tensor<T>& g = t.upstream(self);
    if (t.needs_grad(ia)) t.accumulate(ia, detail::matmul_values(g, t.value(ib).transposed()));
    if (t.needs_grad(ib)) t.accumulate(ib, detail::matmul_values(t.value(ia).transposed(), g));
  });
}

template <class T>
Var<T> transpose(Var<T> a) {
  Tape<T>& tape = detail::same_tape<T>({a});
  detail::require_matrix(a.value(), "transpose");
  const std::size_t ia = a.id();
  return tape.record(a.value().transposed(), {ia}, [=](Tape<T>& t, std::size_t self) {
    t.accumulate(ia, t.upstream(self).transposed());
  });
}

template <class T>
Var<T> add(Var<T> a, Var<T> b) {
  return detail::broadcast_binary(
      a, b, "add", [](T x, T y) { return x + y; }, [](T, T, T) { return T{1}; },
      [](T, T, T) { return T{1}; });
}

template <class T>
Var<T> mul(Var<T> a, Var<T> b) {
  return detail::broadcast_binary(
      a, b, "mul", [](T x, T y) { return x * y; }, [](T, T y, T) { return y; },
      [](T x, T, T) { return x; });
}

template <class T>
Var<T> div(Var<T> a, Var<T> b) {
  return detail::broadcast_binary(
      a, b, "div", [](T x, T y) { return x / y; }, [](T, T y, T) { return T{1} / y; },
      [](T, T y, T z) { return -z / y; });
}

/// scale * x + shift, elementwise.
template <class T>
Var<T> affine(Var<T> x, T scale, T shift) {
  Tape<T>& tape = detail::same_tape<T>({x});
  Tensor<T> out = x.value();
  for (auto& v : out.data()) v = scale * v + shift;
  const std::size_t ix = x.id();
  return tape.record(std::move(out), {ix}, [=](Tape<T>& t, std::size_t self) {
    Tensor<T> g = t.upstream(self);
    for (auto& v : g.data()) v *= scale;
    t.accumulate(ix, g);
  });
}

/// tanh approximation of GELU.
template <class T>
Var<T> gelu(Var<T> x) {
  Tape<T>& tape = detail::same_tape<T>({x});
  const T c = static_cast<T>(std::sqrt(2.0 / std::numbers::pi));
  const T a = static_cast<T>(0.044715);
  Tensor<T> out = x.value();
  for (auto& v : out.data()) v = T{0.5} * v * (T{1} + std::tanh(c * (v + a * v * v * v)));
  const std::size_t ix = x.id();
  return tape.record(std::move(out), {ix}, [=](Tape<T>& t, std::size_t self) {
    const Tensor<T>& xv = t.value(ix);
    Tensor<T> g = t.upstream(self);
    for (std::size_t i = 0; i < g.size(); ++i) {
      const T v = xv[i];
      const T th = std::tanh(c * (v + a * v * v * v));
      const T d = T{0.5} * (T{1} + th) +
                  T{0.5} * v * (T{1} - th * th) * c * (T{1} + T{3} * a * v * v);
      g[i] *= d;
    }
    t.accumulate(ix, g);
  });
}

/// Softmax along `axis` (0: down columns, 1: along rows), max-subtracted.
template <class T>
Var<T> softmax(Var<T> x, std::size_t axis) {
  Tape<T>& tape = detail::same_tape<T>({x});
  const Tensor<T>& xv = x.value();
  detail::require_matrix(xv, "softmax");
  if (axis > 1) throw ShapeError("softmax: axis " + std::to_string(axis) + " invalid for a matrix");
  const std::size_t m = xv.rows(), n = xv.cols();
  const std::size_t lanes = axis == 1 ? m : n, len = axis == 1 ? n : m;
  auto at = [=](std::size_t lane, std::size_t k) { return axis == 1 ? lane * n + k : k * n + lane; };
  Tensor<T> out(xv.shape());
  for (std::size_t lane = 0; lane < lanes; ++lane) {
    T mx = xv[at(lane, 0)];
    for (std::size_t k = 1; k < len; ++k) mx = std::max(mx, xv[at(lane, k)]);
    T total{0};
    for (std::size_t k = 0; k < len; ++k) {
      const T e = std::exp(xv[at(lane, k)] - mx);
      out[at(lane, k)] = e;
      total += e;
    }
    for (std::size_t k = 0; k < len; ++k) out[at(lane, k)] /= total;
  }
  const std::size_t ix = x.id();
  return tape.record(std::move(out), {ix}, [=](Tape<T>& t, std::size_t self) {
    const Tensor<T>& y = t.value(self);
    const Tensor<T>& g = t.upstream(self);
    Tensor<T> gx(y.shape());
    for (std::size_t lane = 0; lane < lanes; ++lane) {
      T dot{0};
      for (std::size_t k = 0; k < len; ++k) dot += g[at(lane, k)] * y[at(lane, k)];
      for (std::size_t k = 0; k < len; ++k) gx[at(lane, k)] = y[at(lane, k)] * (g[at(lane, k)] - dot);
    }
    t.accumulate(ix, gx);
  });
}

inline constexpr double kLayerNormEpsilon = 1e-5;

/// Per-row standardisation over the last axis, then gain * xhat + bias.
/// gain and bias are 1 x n.
template <class T>
Var<T> layer_norm(Var<T> x, Var<T> gain, Var<T> bias) {
  Tape<T>& tape = detail::same_tape<T>({x, gain, bias});
  const Tensor<T>& xv = x.value();
  detail::require_matrix(xv, "layer_norm");
  const std::size_t m = xv.rows(), n = xv.cols();
  const Shape affine_shape{1, n};
  if (gain.value().shape() != affine_shape || bias.value().shape() != affine_shape) {
    throw ShapeError("layer_norm: gain " + shape_string(gain.value().shape()) + " / bias " +
                     shape_string(bias.value().shape()) + " for input " + shape_string(xv.shape()));
  }
  const T eps = static_cast<T>(kLayerNormEpsilon);
  // xhat and inverse std are recomputed in backward from the stored input.
  auto standardise = [=](const Tensor<T>& in, Tensor<T>& xhat, std::vector<T>& inv) {
    for (std::size_t i = 0; i < m; ++i) {
      T mean{0};
      for (std::size_t j = 0; j < n; ++j) mean += in(i, j);
      mean /= static_cast<T>(n);
      T var{0};
      for (std::size_t j = 0; j < n; ++j) var += (in(i, j) - mean) * (in(i, j) - mean);
      var /= static_cast<T>(n);
      inv[i] = T{1} / std::sqrt(var + eps);
      for (std::size_t j = 0; j < n; ++j) xhat(i, j) = (in(i, j) - mean) * inv[i];
    }
  };
  Tensor<T> xhat(xv.shape());
  std::vector<T> inv(m);
  standardise(xv, xhat, inv);
  Tensor<T> out(xv.shape());
  const Tensor<T>& gv = gain.value();
  const Tensor<T>& bv = bias.value();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out(i, j) = gv(0, j) * xhat(i, j) + bv(0, j);

  const std::size_t ix = x.id(), ig = gain.id(), ib = bias.id();
  return tape.record(std::move(out), {ix, ig, ib}, [=](Tape<T>& t, std::size_t self) {
    const Tensor<T>& g = t.upstream(self);
    const Tensor<T>& gvb = t.value(ig);
    Tensor<T> xh(t.value(ix).shape());
    std::vector<T> iv(m);
    standardise(t.value(ix), xh, iv);
    Tensor<T> gx(xh.shape()), ggain({1, n}), gbias({1, n});
    for (std::size_t i = 0; i < m; ++i) {
      T sum_d{0}, sum_dx{0};
      for (std::size_t j = 0; j < n; ++j) {
        const T d = g(i, j) * gvb(0, j);
        sum_d += d;
        sum_dx += d * xh(i, j);
        ggain(0, j) += g(i, j) * xh(i, j);
        gbias(0, j) += g(i, j);
      }
      const T nn = static_cast<T>(n);
      for (std::size_t j = 0; j < n; ++j) {
        const T d = g(i, j) * gvb(0, j);
        gx(i, j) = iv[i] / nn * (nn * d - sum_d - xh(i, j) * sum_dx);
      }
    }
    t.accumulate(ix, gx);
    t.accumulate(ig, ggain);
    t.accumulate(ib, gbias);
  });
}

/// Concatenates matrices along `axis`.
template <class T>
Var<T> concat(const std::vector<Var<T>>& parts, std::size_t axis) {
  if (parts.empty()) throw ArgumentError("concat: no inputs");
  if (axis > 1) throw ShapeError("concat: axis " + std::to_string(axis) + " invalid for a matrix");
  Tape<T>& tape = parts.front().tape();
  std::size_t rows = parts.front().value().rows(), cols = parts.front().value().cols();
  std::vector<std::size_t> ids;
  std::vector<std::size_t> offsets;
  std::size_t total = 0;
  for (const auto& p : parts) {
    if (&p.tape() != &tape) throw ArgumentError("concat: variables recorded on different tapes");
    const Tensor<T>& v = p.value();
    detail::require_matrix(v, "concat");
    const bool ok = axis == 0 ? v.cols() == cols : v.rows() == rows;
    if (!ok) {
      throw ShapeError("concat: " + shape_string(v.shape()) + " incompatible with " +
                       shape_string(parts.front().value().shape()) + " along axis " +
                       std::to_string(axis));
    }
    offsets.push_back(total);
    total += axis == 0 ? v.rows() : v.cols();
    ids.push_back(p.id());
  }
  Tensor<T> out(axis == 0 ? Shape{total, cols} : Shape{rows, total});
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const Tensor<T>& v = parts[k].value();
    for (std::size_t i = 0; i < v.rows(); ++i)
      for (std::size_t j = 0; j < v.cols(); ++j)
        out(axis == 0 ? i + offsets[k] : i, axis == 0 ? j : j + offsets[k]) = v(i, j);
  }
  return tape.record(std::move(out), ids, [=](Tape<T>& t, std::size_t self) {
    const Tensor<T>& g = t.upstream(self);
    for (std::size_t k = 0; k < ids.size(); ++k) {
      if (!t.needs_grad(ids[k])) continue;
      const Tensor<T>& v = t.value(ids[k]);
      Tensor<T> gk(v.shape());
      for (std::size_t i = 0; i < v.rows(); ++i)
        for (std::size_t j = 0; j < v.cols(); ++j)
          gk(i, j) = g(axis == 0 ? i + offsets[k] : i, axis == 0 ? j : j + offsets[k]);
      t.accumulate(ids[k], gk);
    }
  });
}

/// Half-open range [begin, end) along `axis`.
template <class T>
Var<T> slice(Var<T> x, std::size_t axis, std::size_t begin, std::size_t end) {
  Tape<T>& tape = detail::same_tape<T>({x});
  const Tensor<T>& xv = x.value();
  detail::require_matrix(xv, "slice");
  const std::size_t limit = axis == 0 ? xv.rows() : axis == 1 ? xv.cols() : 0;
  if (axis > 1 || begin >= end || end > limit) {
    throw ShapeError("slice: [" + std::to_string(begin) + ", " + std::to_string(end) +
                     ") on axis " + std::to_string(axis) + " of " + shape_string(xv.shape()));
  }
  const std::size_t rows = axis == 0 ? end - begin : xv.rows();
  const std::size_t cols = axis == 1 ? end - begin : xv.cols();
  const std::size_t r0 = axis == 0 ? begin : 0, c0 = axis == 1 ? begin : 0;
  Tensor<T> out({rows, cols});
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) out(i, j) = xv(i + r0, j + c0);
  const std::size_t ix = x.id();
  return tape.record(std::move(out), {ix}, [=](Tape<T>& t, std::size_t self) {
    const Tensor<T>& g = t.upstream(self);
    Tensor<T> gx(t.value(ix).shape());
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t j = 0; j < cols; ++j) gx(i + r0, j + c0) = g(i, j);
    t.accumulate(ix, gx);
  });
}

/// Sum along `axis` keeping it as extent 1 (axis 0 -> 1 x n, axis 1 -> m x 1).
template <class T>
Var<T> sum(Var<T> x, std::size_t axis) {
  Tape<T>& tape = detail::same_tape<T>({x});
  const Tensor<T>& xv = x.value();
  detail::require_matrix(xv, "sum");
  if (axis > 1) throw ShapeError("sum: axis " + std::to_string(axis) + " invalid for a matrix");
  const std::size_t m = xv.rows(), n = xv.cols();
  Tensor<T> out(axis == 0 ? Shape{1, n} : Shape{m, 1});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out(axis == 0 ? 0 : i, axis == 0 ? j : 0) += xv(i, j);
  const std::size_t ix = x.id();
  return tape.record(std::move(out), {ix}, [=](Tape<T>& t, std::size_t self) {
    const Tensor<T>& g = t.upstream(self);
    Tensor<T> gx({m, n});
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) gx(i, j) = g(axis == 0 ? 0 : i, axis == 0 ? j : 0);
    t.accumulate(ix, gx);
  });
}

/// Sum of every element as a 1x1 matrix.
template <class T>
Var<T> sum_all(Var<T> x) {
  return sum(sum(x, 1), 0);
}

/// Central differences (f(x + eps e_i) - f(x - eps e_i)) / (2 eps) per element.
template <class T, class F>
Tensor<T> finite_difference_gradient(F&& f, const Tensor<T>& x, T eps) {
  if (!(eps > T{0})) throw ArgumentError("finite_difference_gradient: eps must be positive");
  Tensor<T> grad(x.shape());
  Tensor<T> probe = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const T original = probe[i];
    probe[i] = original + eps;
    const T up = static_cast<T>(f(static_cast<const Tensor<T>&>(probe)));
    probe[i] = original - eps;
    const T down = static_cast<T>(f(static_cast<const Tensor<T>&>(probe)));
    probe[i] = original;
    if (!std::isfinite(up) || !std::isfinite(down)) {
      throw EvaluationError("finite_difference_gradient: non-finite value at element " +
                            std::to_string(i));
    }
    grad[i] = (up - down) / (T{2} * eps);
  }
  return grad;
}

/// Scalar value of a 1x1 variable.
template <class T>
T scalar(Var<T> v) {
  if (v.value().size() != 1) throw ShapeError("scalar: got " + shape_string(v.value().shape()));
  return v.value()[0];
}

}  // namespace amnc
