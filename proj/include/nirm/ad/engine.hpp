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

// Program-level differentiation entry points.
//
// A program is any callable that, given a tape and bound parameter sets,
// records a computation and returns its output variable. Programs are written
// once as generic lambdas and instantiated for double (values, gradients) and
// Dual<double> (directional derivatives of gradients):
//
//   auto f = [](auto& tape, const auto& p) { return ad::sum(ad::square(p["x"])); };
//   ad::ParameterSet g = ad::gradient(f, params);
//
// Two-set programs take (tape, inner, outer). The gradient-norm helpers
// differentiate ||grad_inner f||^2 with respect to outer by seeding the inner
// parameters with the direction grad_inner f and reading the tangent of the
// outer adjoints, which equals the mixed second derivative applied to that
// direction.

#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "nirm/ad/parameter_set.hpp"
#include "nirm/ad/tape.hpp"

namespace nirm::ad {

/// Parameter set whose tensors live on a tape.
template <Scalar T>
class Bound {
 public:
  Bound(const ParameterSet& layout, std::vector<Var<T>> vars) : layout_(&layout), vars_(std::move(vars)) {}

  Var<T> operator[](const std::string& name) const { return vars_.at(layout_->index_of(name)); }
  Var<T> at(std::size_t i) const { return vars_.at(i); }
  std::size_t size() const { return vars_.size(); }
  const ParameterSet& layout() const { return *layout_; }

  /// The sublayout.size() entries starting at first, viewed under sublayout.
  Bound slice(const ParameterSet& sublayout, std::size_t first) const {
    if (first + sublayout.size() > vars_.size()) throw ShapeError("bound slice: out of range");
    return Bound(sublayout, std::vector<Var<T>>(vars_.begin() + first, vars_.begin() + first + sublayout.size()));
  }

 private:
  const ParameterSet* layout_;
  std::vector<Var<T>> vars_;
};

template <Scalar T>
Bound<T> bind(Tape<T>& tape, const ParameterSet& set) {
  std::vector<Var<T>> vars;
  for (const auto& e : set.entries()) vars.push_back(tape.input(lift<T>(e.tensor)));
  return Bound<T>(set, std::move(vars));
}

template <Scalar T>
Bound<T> bind_constant(Tape<T>& tape, const ParameterSet& set) {
  std::vector<Var<T>> vars;
  for (const auto& e : set.entries()) vars.push_back(tape.constant(lift<T>(e.tensor)));
  return Bound<T>(set, std::move(vars));
}

/// Binds values with first-order tangents; a null direction means zero tangent.
inline Bound<Dual<double>> bind_with_tangent(Tape<Dual<double>>& tape, const ParameterSet& values,
                                             const ParameterSet* direction) {
  if (direction != nullptr && !values.same_layout(*direction)) {
    throw ShapeError("bind_with_tangent: direction layout does not match values");
  }
  std::vector<Var<Dual<double>>> vars;
  for (std::size_t i = 0; i < values.size(); ++i) {
    const Tensor<double>& v = values.at(i);
    std::vector<Dual<double>> data(v.size());
    for (std::size_t j = 0; j < v.size(); ++j) {
      data[j] = Dual<double>(v[j], direction != nullptr ? direction->at(i)[j] : 0.0);
    }
    vars.push_back(tape.input(Tensor<Dual<double>>(v.shape(), std::move(data))));
  }
  return Bound<Dual<double>>(values, std::move(vars));
}

namespace detail {

inline ParameterSet collect_values(const std::vector<Tensor<double>>& adj, const Bound<double>& bound) {
  ParameterSet out = bound.layout().zeros_like();
  for (std::size_t i = 0; i < bound.size(); ++i) {
    const Tensor<double>& a = adj[bound.at(i).id];
    if (!a.empty()) out.at(i) = a;
  }
  return out;
}

/// Splits dual adjoints into (value, tangent) parameter sets.
inline std::pair<ParameterSet, ParameterSet> collect_duals(const std::vector<Tensor<Dual<double>>>& adj,
                                                           const Bound<Dual<double>>& bound) {
  ParameterSet value = bound.layout().zeros_like();
  ParameterSet tangent = bound.layout().zeros_like();
  for (std::size_t i = 0; i < bound.size(); ++i) {
    const auto& a = adj[bound.at(i).id];
    if (a.empty()) continue;
    for (std::size_t j = 0; j < a.size(); ++j) {
      value.at(i)[j] = a[j].v;
      tangent.at(i)[j] = a[j].d;
    }
  }
  return {std::move(value), std::move(tangent)};
}

template <Scalar T>
void require_scalar(Var<T> out, const char* what) {
  if (out.value().size() != 1) {
    throw ShapeError(std::string(what) + ": program output is not scalar " + shape_string(out.shape()));
  }
}

}  // namespace detail

template <class Program>
Tensor<double> evaluate(const Program& program, const ParameterSet& inputs) {
  Tape<double> tape;
  Bound<double> bound = bind(tape, inputs);
  return program(tape, bound).value();
}

struct ValueAndGradient {
  double value = 0.0;
  ParameterSet gradient;
};

template <class Program>
ValueAndGradient value_and_gradient(const Program& program, const ParameterSet& wrt) {
  Tape<double> tape;
  Bound<double> bound = bind(tape, wrt);
  Var<double> out = program(tape, bound);
  detail::require_scalar(out, "gradient");
  return {out.value()[0], detail::collect_values(tape.backward(out), bound)};
}

template <class Program>
ParameterSet gradient(const Program& program, const ParameterSet& wrt) {
  return value_and_gradient(program, wrt).gradient;
}

/// Gradients of a two-set program at (inner, outer).
struct PairGradient {
  double value = 0.0;
  ParameterSet inner;
  ParameterSet outer;
};

template <class Program>
PairGradient pair_gradient(const Program& program, const ParameterSet& inner, const ParameterSet& outer) {
  Tape<double> tape;
  Bound<double> bi = bind(tape, inner);
  Bound<double> bo = bind(tape, outer);
  Var<double> out = program(tape, bi, bo);
  detail::require_scalar(out, "gradient");
  auto adj = tape.backward(out);
  return {out.value()[0], detail::collect_values(adj, bi), detail::collect_values(adj, bo)};
}

/// Gradients at (inner, outer) together with their derivative along
/// inner + ε·direction.
struct DirectionalGradient {
  double value = 0.0;
  ParameterSet inner;
  ParameterSet outer;
  ParameterSet inner_tangent;
  ParameterSet outer_tangent;
};

template <class Program>
DirectionalGradient directional_gradient(const Program& program, const ParameterSet& inner,
                                         const ParameterSet& outer, const ParameterSet& direction) {
  Tape<Dual<double>> tape;
  Bound<Dual<double>> bi = bind_with_tangent(tape, inner, &direction);
  Bound<Dual<double>> bo = bind_with_tangent(tape, outer, nullptr);
  Var<Dual<double>> out = program(tape, bi, bo);
  detail::require_scalar(out, "directional_gradient");
  auto adj = tape.backward(out);
  auto [gi, ti] = detail::collect_duals(adj, bi);
  auto [go, to] = detail::collect_duals(adj, bo);
  return {out.value()[0].v, std::move(gi), std::move(go), std::move(ti), std::move(to)};
}

/// f, ||grad_inner f||^2 and the gradients of both with respect to each set.
struct GradientNormTerms {
  double value = 0.0;
  double penalty = 0.0;
  ParameterSet grad_inner;
  ParameterSet grad_outer;
  ParameterSet penalty_grad_inner;
  ParameterSet penalty_grad_outer;
};

template <class Program>
GradientNormTerms gradient_norm_terms(const Program& program, const ParameterSet& inner,
                                      const ParameterSet& outer) {
  PairGradient first = pair_gradient(program, inner, outer);
  DirectionalGradient second = directional_gradient(program, inner, outer, first.inner);
  GradientNormTerms out;
  out.value = first.value;
  out.penalty = first.inner.squared_norm();
  out.grad_inner = std::move(first.inner);
  out.grad_outer = std::move(first.outer);
  out.penalty_grad_inner = std::move(second.inner_tangent);
  out.penalty_grad_inner.scale(2.0);
  out.penalty_grad_outer = std::move(second.outer_tangent);
  out.penalty_grad_outer.scale(2.0);
  return out;
}

/// ∇_outer ||∇_inner program||², with inner held at its current values.
template <class Program>
ParameterSet gradient_of_gradient_norm(const Program& program, const ParameterSet& inner,
                                       const ParameterSet& outer) {
  return gradient_norm_terms(program, inner, outer).penalty_grad_outer;
}

/// A program traced once on a private tape; its declared inputs can be
/// replaced and the forward pass replayed.
class Record {
 public:
  template <class Program>
  static Record trace(const Program& program, const ParameterSet& declared) {
    Record r;
    r.tape_ = std::make_unique<Tape<double>>();
    r.layout_ = declared;
    for (const auto& e : r.layout_.entries()) r.leaves_.push_back(r.tape_->input(e.tensor));
    Bound<double> bound(r.layout_, r.leaves_);
    r.output_ = program(*r.tape_, bound);
    return r;
  }

  /// Replays the recorded operations on new input values.
  Tensor<double> evaluate(const ParameterSet& inputs) {
    load(inputs);
    tape_->replay();
    return output_.value();
  }

  ParameterSet gradient(const ParameterSet& inputs) {
    load(inputs);
    tape_->replay();
    detail::require_scalar(output_, "gradient");
    Bound<double> bound(layout_, leaves_);
    return detail::collect_values(tape_->backward(output_), bound);
  }

  std::size_t operation_count() const { return tape_->size(); }
  const Tape<double>& tape() const { return *tape_; }

 private:
  Record() = default;

  void load(const ParameterSet& inputs) {
    for (std::size_t i = 0; i < layout_.size(); ++i) {
      const std::string& name = layout_.name(i);
      if (!inputs.contains(name)) throw ShapeError("evaluate: missing input '" + name + "'");
      const Tensor<double>& t = inputs.at(name);
      if (t.shape() != layout_.at(i).shape()) {
        throw ShapeError("evaluate: input '" + name + "' has shape " + shape_string(t.shape()) +
                         ", expected " + shape_string(layout_.at(i).shape()));
      }
      tape_->set_leaf(leaves_[i], t);
    }
  }

  std::unique_ptr<Tape<double>> tape_;
  ParameterSet layout_;
  std::vector<Var<double>> leaves_;
  Var<double> output_;
};

}  // namespace nirm::ad
