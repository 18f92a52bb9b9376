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

#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "nirm/ad/dual.hpp"

namespace nirm::ad {

using Shape = std::vector<std::size_t>;

/// Raised for any malformed tensor or operation input. The message names the
/// offending operation.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

inline std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_string(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i != 0) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

/// Dense row-major tensor. Rank 0 is not used; scalars have shape {1}.
template <class T = double>
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(Shape shape, T fill = T{}) : shape_(std::move(shape)) {
    validate_shape(shape_);
    data_.assign(shape_size(shape_), fill);
  }

  Tensor(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
    validate_shape(shape_);
    if (shape_size(shape_) != data_.size()) {
      throw ShapeError("tensor: shape " + shape_string(shape_) + " does not match " +
                       std::to_string(data_.size()) + " values");
    }
  }

  static Tensor scalar(T value) { return Tensor(Shape{1}, std::vector<T>{value}); }
  static Tensor matrix(std::size_t rows, std::size_t cols, T fill = T{}) {
    return Tensor(Shape{rows, cols}, fill);
  }

  const Shape& shape() const { return shape_; }
  std::size_t size() const { return data_.size(); }
  std::size_t rank() const { return shape_.size(); }
  bool empty() const { return data_.empty(); }

  /// Row count when viewed as a matrix; rank-1 tensors are a single row.
  std::size_t rows() const { return shape_.size() == 2 ? shape_[0] : 1; }
  std::size_t cols() const { return shape_.empty() ? 0 : shape_.back(); }

  std::span<T> data() { return data_; }
  std::span<const T> data() const { return data_; }
  std::vector<T>& values() { return data_; }
  const std::vector<T>& values() const { return data_; }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }
  T& at(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
  const T& at(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }

  T item() const {
    if (data_.size() != 1) throw ShapeError("item: tensor is not a scalar " + shape_string(shape_));
    return data_[0];
  }

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  static void validate_shape(const Shape& shape) {
    if (shape.empty()) throw ShapeError("tensor: empty shape");
    for (std::size_t d : shape) {
      if (d == 0) throw ShapeError("tensor: zero extent in shape " + shape_string(shape));
    }
  }

  Shape shape_;
  std::vector<T> data_;
};

/// Lifts a double tensor into another scalar type with zero tangents.
template <class T>
Tensor<T> lift(const Tensor<double>& t) {
  if constexpr (std::is_same_v<T, double>) {
    return t;
  } else {
    std::vector<T> out(t.size());
    for (std::size_t i = 0; i < t.size(); ++i) out[i] = T(t[i]);
    return Tensor<T>(t.shape(), std::move(out));
  }
}

template <class T>
Tensor<double> primal_of(const Tensor<T>& t) {
  if constexpr (std::is_same_v<T, double>) {
    return t;
  } else {
    std::vector<double> out(t.size());
    for (std::size_t i = 0; i < t.size(); ++i) out[i] = primal(t[i]);
    return Tensor<double>(t.shape(), std::move(out));
  }
}

}  // namespace nirm::ad
