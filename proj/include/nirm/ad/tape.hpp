// Copyright 2026 The NIRM Trajectory Authors
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

#pragma once

// Define-by-run reverse-mode tape over dense tensors.
//
// Every primitive records its inputs and computes its value eagerly. The
// adjoint sweep is written entirely in the tape's scalar type, so running the
// same program on Tape<Dual<double>> with seeded tangents differentiates the
// reverse pass itself (forward-over-reverse). Nodes that do not depend on any
// declared input are marked inactive and skipped by the sweep.

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "nirm/ad/dual.hpp"
#include "nirm/ad/kernels.hpp"
#include "nirm/ad/tensor.hpp"

namespace nirm::ad {

/// Raised when the adjoint sweep meets a point where a primitive has no
/// derivative (square root at zero).
class NonDifferentiableError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

enum class Op : std::uint8_t {
  kLeaf,
  kAffine,
  kAdd,
  kSub,
  kMul,
  kScale,
  kShift,
  kMulScalar,
  kTanh,
  kSoftplus,
  kSquare,
  kSqrt,
  kSum,
  kMean,
  kConcatCols,
  kSliceCols,
  kGatherRows,
  kReshape,
};

inline const char* op_name(Op op) {
  switch (op) {
    case Op::kLeaf: return "leaf";
    case Op::kAffine: return "affine";
    case Op::kAdd: return "add";
    case Op::kSub: return "sub";
    case Op::kMul: return "mul";
    case Op::kScale: return "scale";
    case Op::kShift: return "shift";
    case Op::kMulScalar: return "mul_scalar";
    case Op::kTanh: return "tanh";
    case Op::kSoftplus: return "softplus";
    case Op::kSquare: return "square";
    case Op::kSqrt: return "sqrt";
    case Op::kSum: return "sum";
    case Op::kMean: return "mean";
    case Op::kConcatCols: return "concat_cols";
    case Op::kSliceCols: return "slice_cols";
    case Op::kGatherRows: return "gather_rows";
    case Op::kReshape: return "reshape";
  }
  return "unknown";
}

template <Scalar T>
class Tape;

/// Handle to a value recorded on a tape.
template <Scalar T>
struct Var {
  Tape<T>* tape = nullptr;
  std::size_t id = 0;

  const Tensor<T>& value() const { return tape->value(*this); }
  const Shape& shape() const { return value().shape(); }
};

template <Scalar T>
class Tape {
 public:
  struct Node {
    Op op = Op::kLeaf;
    std::vector<std::size_t> inputs;
    Tensor<T> value;
    double constant = 0.0;
    std::size_t begin = 0;
    std::size_t end = 0;
    std::vector<std::size_t> index;
    Shape target;
    bool active = false;
  };

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
  Tape(Tape&&) = default;
  Tape& operator=(Tape&&) = default;

  /// Declares a differentiable input.
  Var<T> input(Tensor<T> value) { return leaf(std::move(value), true); }

  Var<T> constant(Tensor<T> value) { return leaf(std::move(value), false); }

  Var<T> constant(const Tensor<double>& value)
    requires(!std::is_same_v<T, double>)
  {
    return leaf(lift<T>(value), false);
  }

  Var<T> record(Node node) {
    bool active = false;
    for (std::size_t in : node.inputs) {
      if (in >= nodes_.size()) throw ShapeError(std::string(op_name(node.op)) + ": dangling input");
      active = active || nodes_[in].active;
    }
    node.active = active;
    compute(node, nodes_.size());
    nodes_.push_back(std::move(node));
    return Var<T>{this, nodes_.size() - 1};
  }

  const Tensor<T>& value(Var<T> v) const { return nodes_.at(v.id).value; }
  const Node& node(std::size_t id) const { return nodes_.at(id); }
  std::size_t size() const { return nodes_.size(); }

  /// Replaces a leaf value; the shape must not change. Call replay() after.
  void set_leaf(Var<T> v, Tensor<T> value) {
    Node& n = nodes_.at(v.id);
    if (n.op != Op::kLeaf) throw ShapeError("set_leaf: node is not a leaf");
    if (n.value.shape() != value.shape()) {
      throw ShapeError("set_leaf: shape " + shape_string(value.shape()) + " does not match " +
                       shape_string(n.value.shape()));
    }
    n.value = std::move(value);
  }

  /// Recomputes every non-leaf node in recording order.
  void replay() {
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
      if (nodes_[i].op != Op::kLeaf) compute(nodes_[i], i);
    }
  }

  /// Adjoints of a scalar output with respect to every active node. Entries
  /// for nodes the output does not depend on are left empty.
  std::vector<Tensor<T>> backward(Var<T> out) const {
    const Node& root = nodes_.at(out.id);
    if (root.value.size() != 1) {
      throw ShapeError("backward: output is not scalar " + shape_string(root.value.shape()));
    }
    std::vector<Tensor<T>> adj(nodes_.size());
    if (!root.active) return adj;
    adj[out.id] = Tensor<T>(root.value.shape(), T(1.0));
    for (std::size_t i = out.id + 1; i-- > 0;) {
      if (adj[i].empty() || !nodes_[i].active || nodes_[i].op == Op::kLeaf) continue;
      propagate(i, adj);
    }
    return adj;
  }

 private:
  Var<T> leaf(Tensor<T> value, bool active) {
    Node n;
    n.op = Op::kLeaf;
    n.value = std::move(value);
    n.active = active;
    nodes_.push_back(std::move(n));
    return Var<T>{this, nodes_.size() - 1};
  }

  [[noreturn]] static void fail(const Node& n, std::size_t id, const std::string& what) {
    throw ShapeError(std::string(op_name(n.op)) + " (node " + std::to_string(id) + "): " + what);
  }

  const Tensor<T>& in(const Node& n, std::size_t k) const { return nodes_[n.inputs[k]].value; }

  void compute(Node& n, std::size_t id) {
    auto need_matrix = [&](const Tensor<T>& t, const char* which) {
      if (t.rank() != 2) fail(n, id, std::string(which) + " must be a matrix, got " + shape_string(t.shape()));
    };
    auto same_shape = [&](const Tensor<T>& a, const Tensor<T>& b) {
      if (a.shape() != b.shape()) {
        fail(n, id, "shape mismatch " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
      }
    };
    auto unary = [&](auto&& f) {
      const Tensor<T>& x = in(n, 0);
      Tensor<T> y(x.shape());
      for (std::size_t i = 0; i < x.size(); ++i) y[i] = f(x[i]);
      n.value = std::move(y);
    };
    auto binary = [&](auto&& f) {
      const Tensor<T>& a = in(n, 0);
      const Tensor<T>& b = in(n, 1);
      same_shape(a, b);
      Tensor<T> y(a.shape());
      for (std::size_t i = 0; i < a.size(); ++i) y[i] = f(a[i], b[i]);
      n.value = std::move(y);
    };

    switch (n.op) {
      case Op::kLeaf:
        return;
      case Op::kAffine: {
        const Tensor<T>& x = in(n, 0);
        const Tensor<T>& w = in(n, 1);
        need_matrix(x, "input");
        need_matrix(w, "weight");
        if (x.cols() != w.rows()) {
          fail(n, id, "input " + shape_string(x.shape()) + " incompatible with weight " +
                          shape_string(w.shape()));
        }
        Tensor<T> y = Tensor<T>::matrix(x.rows(), w.cols());
        if (n.inputs.size() == 3) {
          const Tensor<T>& b = in(n, 2);
          if (b.size() != w.cols()) fail(n, id, "bias size " + std::to_string(b.size()) + " != " + std::to_string(w.cols()));
          for (std::size_t r = 0; r < y.rows(); ++r) {
            for (std::size_t c = 0; c < y.cols(); ++c) y.at(r, c) = b[c];
          }
        }
        kernels::gemm(x.data().data(), x.rows(), x.cols(), kernels::Trans::kNone, w.data().data(),
                      w.rows(), w.cols(), kernels::Trans::kNone, y.data().data());
        n.value = std::move(y);
        return;
      }
      case Op::kAdd:
        return binary([](const T& a, const T& b) { return a + b; });
      case Op::kSub:
        return binary([](const T& a, const T& b) { return a - b; });
      case Op::kMul:
        return binary([](const T& a, const T& b) { return a * b; });
      case Op::kScale: {
        const T c(n.constant);
        return unary([&](const T& x) { return c * x; });
      }
      case Op::kShift: {
        const T c(n.constant);
        return unary([&](const T& x) { return x + c; });
      }
      case Op::kMulScalar: {
        const Tensor<T>& s = in(n, 1);
        if (s.size() != 1) fail(n, id, "multiplier must be scalar, got " + shape_string(s.shape()));
        const T k = s[0];
        return unary([&](const T& x) { return x * k; });
      }
      case Op::kTanh:
        return unary([](const T& x) { return tanh(x); });
      case Op::kSoftplus:
        return unary([](const T& x) { return softplus(x); });
      case Op::kSquare:
        return unary([](const T& x) { return x * x; });
      case Op::kSqrt:
        for (const T& x : in(n, 0).data()) {
          if (primal(x) < 0.0) fail(n, id, "negative argument");
        }
        return unary([](const T& x) { return sqrt(x); });
      case Op::kSum:
      case Op::kMean: {
        const Tensor<T>& x = in(n, 0);
        T acc(0.0);
        for (const T& v : x.data()) acc += v;
        if (n.op == Op::kMean) acc = acc * T(1.0 / static_cast<double>(x.size()));
        n.value = Tensor<T>::scalar(acc);
        return;
      }
      case Op::kConcatCols: {
        if (n.inputs.empty()) fail(n, id, "no inputs");
        std::size_t rows = 0;
        std::size_t cols = 0;
        for (std::size_t k = 0; k < n.inputs.size(); ++k) {
          const Tensor<T>& t = in(n, k);
          need_matrix(t, "operand");
          if (k == 0) rows = t.rows();
          if (t.rows() != rows) fail(n, id, "row count mismatch " + shape_string(t.shape()));
          cols += t.cols();
        }
        Tensor<T> y = Tensor<T>::matrix(rows, cols);
        std::size_t offset = 0;
        for (std::size_t k = 0; k < n.inputs.size(); ++k) {
          const Tensor<T>& t = in(n, k);
          for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t c = 0; c < t.cols(); ++c) y.at(r, offset + c) = t.at(r, c);
          }
          offset += t.cols();
        }
        n.value = std::move(y);
        return;
      }
      case Op::kSliceCols: {
        const Tensor<T>& x = in(n, 0);
        need_matrix(x, "input");
        if (n.begin >= n.end || n.end > x.cols()) {
          fail(n, id, "column range [" + std::to_string(n.begin) + "," + std::to_string(n.end) +
                          ") outside " + shape_string(x.shape()));
        }
        Tensor<T> y = Tensor<T>::matrix(x.rows(), n.end - n.begin);
        for (std::size_t r = 0; r < x.rows(); ++r) {
          for (std::size_t c = n.begin; c < n.end; ++c) y.at(r, c - n.begin) = x.at(r, c);
        }
        n.value = std::move(y);
        return;
      }
      case Op::kGatherRows: {
        const Tensor<T>& x = in(n, 0);
        need_matrix(x, "input");
        if (n.index.empty()) fail(n, id, "empty row index");
        Tensor<T> y = Tensor<T>::matrix(n.index.size(), x.cols());
        for (std::size_t r = 0; r < n.index.size(); ++r) {
          if (n.index[r] >= x.rows()) fail(n, id, "row " + std::to_string(n.index[r]) + " out of range");
          for (std::size_t c = 0; c < x.cols(); ++c) y.at(r, c) = x.at(n.index[r], c);
        }
        n.value = std::move(y);
        return;
      }
      case Op::kReshape: {
        const Tensor<T>& x = in(n, 0);
        if (shape_size(n.target) != x.size()) {
          fail(n, id, "cannot reshape " + shape_string(x.shape()) + " to " + shape_string(n.target));
        }
        n.value = Tensor<T>(n.target, x.values());
        return;
      }
    }
  }

  static void accumulate(Tensor<T>& into, const Tensor<T>& g) {
    if (into.empty()) {
      into = g;
      return;
    }
    for (std::size_t i = 0; i < g.size(); ++i) into[i] += g[i];
  }

  void propagate(std::size_t id, std::vector<Tensor<T>>& adj) const {
    const Node& n = nodes_[id];
    const Tensor<T>& g = adj[id];
    auto active = [&](std::size_t k) { return nodes_[n.inputs[k]].active; };
    auto add_to = [&](std::size_t k, const Tensor<T>& contribution) {
      accumulate(adj[n.inputs[k]], contribution);
    };
    auto elementwise = [&](std::size_t k, auto&& f) {
      if (!active(k)) return;
      const Tensor<T>& x = in(n, k);
      Tensor<T> out(x.shape());
      for (std::size_t i = 0; i < x.size(); ++i) out[i] = f(i);
      add_to(k, out);
    };

    switch (n.op) {
      case Op::kLeaf:
        return;
      case Op::kAffine: {
        const Tensor<T>& x = in(n, 0);
        const Tensor<T>& w = in(n, 1);
        if (active(0)) {
          Tensor<T> gx(x.shape());
          kernels::gemm(g.data().data(), g.rows(), g.cols(), kernels::Trans::kNone, w.data().data(),
                        w.rows(), w.cols(), kernels::Trans::kTranspose, gx.data().data());
          add_to(0, gx);
        }
        if (active(1)) {
          Tensor<T> gw(w.shape());
          kernels::gemm(x.data().data(), x.rows(), x.cols(), kernels::Trans::kTranspose,
                        g.data().data(), g.rows(), g.cols(), kernels::Trans::kNone, gw.data().data());
          add_to(1, gw);
        }
        if (n.inputs.size() == 3 && active(2)) {
          const Tensor<T>& b = in(n, 2);
          Tensor<T> gb(b.shape());
          for (std::size_t r = 0; r < g.rows(); ++r) {
            for (std::size_t c = 0; c < g.cols(); ++c) gb[c] += g.at(r, c);
          }
          add_to(2, gb);
        }
        return;
      }
      case Op::kAdd:
        elementwise(0, [&](std::size_t i) { return g[i]; });
        elementwise(1, [&](std::size_t i) { return g[i]; });
        return;
      case Op::kSub:
        elementwise(0, [&](std::size_t i) { return g[i]; });
        elementwise(1, [&](std::size_t i) { return -g[i]; });
        return;
      case Op::kMul: {
        const Tensor<T>& a = in(n, 0);
        const Tensor<T>& b = in(n, 1);
        elementwise(0, [&](std::size_t i) { return g[i] * b[i]; });
        elementwise(1, [&](std::size_t i) { return g[i] * a[i]; });
        return;
      }
      case Op::kScale: {
        const T c(n.constant);
        elementwise(0, [&](std::size_t i) { return c * g[i]; });
        return;
      }
      case Op::kShift:
        elementwise(0, [&](std::size_t i) { return g[i]; });
        return;
      case Op::kMulScalar: {
        const Tensor<T>& x = in(n, 0);
        const T k = in(n, 1)[0];
        elementwise(0, [&](std::size_t i) { return g[i] * k; });
        if (active(1)) {
          T acc(0.0);
          for (std::size_t i = 0; i < x.size(); ++i) acc += g[i] * x[i];
          add_to(1, Tensor<T>::scalar(acc));
        }
        return;
      }
      case Op::kTanh: {
        const Tensor<T>& y = n.value;
        elementwise(0, [&](std::size_t i) { return g[i] * (T(1.0) - y[i] * y[i]); });
        return;
      }
      case Op::kSoftplus: {
        const Tensor<T>& x = in(n, 0);
        elementwise(0, [&](std::size_t i) { return g[i] * sigmoid(x[i]); });
        return;
      }
      case Op::kSquare: {
        const Tensor<T>& x = in(n, 0);
        elementwise(0, [&](std::size_t i) { return T(2.0) * x[i] * g[i]; });
        return;
      }
      case Op::kSqrt: {
        const Tensor<T>& y = n.value;
        for (const T& v : y.data()) {
          if (primal(v) == 0.0) {
            throw NonDifferentiableError("sqrt (node " + std::to_string(id) +
                                         "): derivative undefined at zero");
          }
        }
        elementwise(0, [&](std::size_t i) { return g[i] / (T(2.0) * y[i]); });
        return;
      }
      case Op::kSum:
        elementwise(0, [&](std::size_t) { return g[0]; });
        return;
      case Op::kMean: {
        const T scale(1.0 / static_cast<double>(in(n, 0).size()));
        elementwise(0, [&](std::size_t) { return g[0] * scale; });
        return;
      }
      case Op::kConcatCols: {
        std::size_t offset = 0;
        for (std::size_t k = 0; k < n.inputs.size(); ++k) {
          const Tensor<T>& t = in(n, k);
          if (active(k)) {
            Tensor<T> part(t.shape());
            for (std::size_t r = 0; r < t.rows(); ++r) {
              for (std::size_t c = 0; c < t.cols(); ++c) part.at(r, c) = g.at(r, offset + c);
            }
            add_to(k, part);
          }
          offset += t.cols();
        }
        return;
      }
      case Op::kSliceCols: {
        if (!active(0)) return;
        const Tensor<T>& x = in(n, 0);
        Tensor<T> gx(x.shape());
        for (std::size_t r = 0; r < x.rows(); ++r) {
          for (std::size_t c = n.begin; c < n.end; ++c) gx.at(r, c) = g.at(r, c - n.begin);
        }
        add_to(0, gx);
        return;
      }
      case Op::kGatherRows: {
        if (!active(0)) return;
        const Tensor<T>& x = in(n, 0);
        Tensor<T> gx(x.shape());
        for (std::size_t r = 0; r < n.index.size(); ++r) {
          for (std::size_t c = 0; c < x.cols(); ++c) gx.at(n.index[r], c) += g.at(r, c);
        }
        add_to(0, gx);
        return;
      }
      case Op::kReshape:
        if (active(0)) add_to(0, Tensor<T>(in(n, 0).shape(), g.values()));
        return;
    }
  }

  std::vector<Node> nodes_;
};

// Primitive constructors. Each records one node on the operands' tape.

namespace detail {
template <Scalar T>
Tape<T>& tape_of(Var<T> v) {
  if (v.tape == nullptr) throw ShapeError("operation on an unbound variable");
  return *v.tape;
}

template <Scalar T>
Var<T> node(Op op, std::vector<Var<T>> operands) {
  Tape<T>& tape = tape_of(operands.front());
  typename Tape<T>::Node n;
  n.op = op;
  for (const Var<T>& v : operands) {
    if (v.tape != &tape) throw ShapeError(std::string(op_name(op)) + ": operands on different tapes");
    n.inputs.push_back(v.id);
  }
  return tape.record(std::move(n));
}
}  // namespace detail

/// x·W + b for x (rows×in), W (in×out), b (out).
template <Scalar T>
Var<T> affine(Var<T> x, Var<T> w, Var<T> b) {
  return detail::node<T>(Op::kAffine, {x, w, b});
}

template <Scalar T>
Var<T> matmul(Var<T> x, Var<T> w) {
  return detail::node<T>(Op::kAffine, {x, w});
}

template <Scalar T>
Var<T> operator+(Var<T> a, Var<T> b) {
  return detail::node<T>(Op::kAdd, {a, b});
}

template <Scalar T>
Var<T> operator-(Var<T> a, Var<T> b) {
  return detail::node<T>(Op::kSub, {a, b});
}

template <Scalar T>
Var<T> operator*(Var<T> a, Var<T> b) {
  return detail::node<T>(Op::kMul, {a, b});
}

template <Scalar T>
Var<T> scale(Var<T> x, double c) {
  typename Tape<T>::Node n;
  n.op = Op::kScale;
  n.inputs = {x.id};
  n.constant = c;
  return detail::tape_of(x).record(std::move(n));
}

template <Scalar T>
Var<T> shift(Var<T> x, double c) {
  typename Tape<T>::Node n;
  n.op = Op::kShift;
  n.inputs = {x.id};
  n.constant = c;
  return detail::tape_of(x).record(std::move(n));
}

/// Multiplies every element of x by the scalar variable s.
template <Scalar T>
Var<T> mul_scalar(Var<T> x, Var<T> s) {
  return detail::node<T>(Op::kMulScalar, {x, s});
}

template <Scalar T>
Var<T> tanh(Var<T> x) {
  return detail::node<T>(Op::kTanh, {x});
}

template <Scalar T>
Var<T> softplus(Var<T> x) {
  return detail::node<T>(Op::kSoftplus, {x});
}

template <Scalar T>
Var<T> square(Var<T> x) {
  return detail::node<T>(Op::kSquare, {x});
}

template <Scalar T>
Var<T> sqrt(Var<T> x) {
  return detail::node<T>(Op::kSqrt, {x});
}

template <Scalar T>
Var<T> sum(Var<T> x) {
  return detail::node<T>(Op::kSum, {x});
}

template <Scalar T>
Var<T> mean(Var<T> x) {
  return detail::node<T>(Op::kMean, {x});
}

template <Scalar T>
Var<T> concat_cols(const std::vector<Var<T>>& parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no inputs");
  return detail::node(Op::kConcatCols, parts);
}

template <Scalar T>
Var<T> slice_cols(Var<T> x, std::size_t begin, std::size_t end) {
  typename Tape<T>::Node n;
  n.op = Op::kSliceCols;
  n.inputs = {x.id};
  n.begin = begin;
  n.end = end;
  return detail::tape_of(x).record(std::move(n));
}

template <Scalar T>
Var<T> gather_rows(Var<T> x, std::vector<std::size_t> index) {
  typename Tape<T>::Node n;
  n.op = Op::kGatherRows;
  n.inputs = {x.id};
  n.index = std::move(index);
  return detail::tape_of(x).record(std::move(n));
}

template <Scalar T>
Var<T> reshape(Var<T> x, Shape target) {
  typename Tape<T>::Node n;
  n.op = Op::kReshape;
  n.inputs = {x.id};
  n.target = std::move(target);
  return detail::tape_of(x).record(std::move(n));
}

}  // namespace nirm::ad
