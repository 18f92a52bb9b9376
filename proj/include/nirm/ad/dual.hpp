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

#include <cmath>
#include <type_traits>

namespace nirm::ad {

/// Scalar elementary functions on plain doubles. The Dual overloads below are
/// found through ADL, so templated code can call these unqualified.
inline double sigmoid(double x) {
  if (x >= 0.0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline double softplus(double x) {
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

using std::sqrt;
using std::tanh;

inline double primal(double x) { return x; }

/// First-order forward-mode number v + d·ε with ε² = 0. Nesting
/// Dual<Dual<double>> yields second derivatives along one direction.
template <class T>
struct Dual {
  T v{};
  T d{};

  constexpr Dual() = default;
  constexpr Dual(double x) : v(x), d(0.0) {}  // NOLINT(google-explicit-constructor)
  constexpr Dual(T value, T tangent) : v(value), d(tangent) {}

  friend Dual operator+(const Dual& a, const Dual& b) { return {a.v + b.v, a.d + b.d}; }
  friend Dual operator-(const Dual& a, const Dual& b) { return {a.v - b.v, a.d - b.d}; }
  friend Dual operator-(const Dual& a) { return {-a.v, -a.d}; }
  friend Dual operator*(const Dual& a, const Dual& b) { return {a.v * b.v, a.d * b.v + a.v * b.d}; }
  friend Dual operator/(const Dual& a, const Dual& b) {
    const T q = a.v / b.v;
    return {q, (a.d - q * b.d) / b.v};
  }
  Dual& operator+=(const Dual& o) {
    v += o.v;
    d += o.d;
    return *this;
  }
  Dual& operator-=(const Dual& o) {
    v -= o.v;
    d -= o.d;
    return *this;
  }
  Dual& operator*=(const Dual& o) { return *this = *this * o; }

  friend Dual tanh(const Dual& x) {
    using nirm::ad::tanh;
    const T y = tanh(x.v);
    return {y, (T(1.0) - y * y) * x.d};
  }
  friend Dual sigmoid(const Dual& x) {
    using nirm::ad::sigmoid;
    const T s = sigmoid(x.v);
    return {s, s * (T(1.0) - s) * x.d};
  }
  friend Dual softplus(const Dual& x) {
    using nirm::ad::sigmoid;
    using nirm::ad::softplus;
    return {softplus(x.v), sigmoid(x.v) * x.d};
  }
  friend Dual sqrt(const Dual& x) {
    using nirm::ad::sqrt;
    const T r = sqrt(x.v);
    return {r, x.d / (T(2.0) * r)};
  }
  friend double primal(const Dual& x) {
    using nirm::ad::primal;
    return primal(x.v);
  }
};

template <class T>
struct is_dual : std::false_type {};
template <class T>
struct is_dual<Dual<T>> : std::true_type {};

/// Scalar types the tape accepts.
template <class T>
concept Scalar = std::is_same_v<T, double> || is_dual<T>::value;

}  // namespace nirm::ad
