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
#include <span>
#include <string>
#include <vector>

#include "nirm/ad/tensor.hpp"

namespace nirm::ad {

/// Ordered collection of uniquely named tensors.
class ParameterSet {
 public:
  struct Entry {
    std::string name;
    Tensor<double> tensor;
  };

  ParameterSet() = default;

  /// Appends an entry; throws std::invalid_argument on a duplicate name.
  void add(std::string name, Tensor<double> tensor);

  bool contains(const std::string& name) const;
  std::size_t index_of(const std::string& name) const;
  const Tensor<double>& at(const std::string& name) const;
  Tensor<double>& at(const std::string& name);
  const Tensor<double>& at(std::size_t i) const { return entries_.at(i).tensor; }
  Tensor<double>& at(std::size_t i) { return entries_.at(i).tensor; }
  const std::string& name(std::size_t i) const { return entries_.at(i).name; }

  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  const std::vector<Entry>& entries() const { return entries_; }

  /// Total number of scalar values across all entries.
  std::size_t parameter_count() const;

  std::vector<double> flatten() const;
  /// Inverse of flatten(); the value count must match exactly.
  void unflatten(std::span<const double> values);

  /// Same names and shapes, all values zero.
  ParameterSet zeros_like() const;
  bool same_layout(const ParameterSet& other) const;

  /// Sum of squares of every value.
  double squared_norm() const;

  /// this += k·other (layouts must match).
  void axpy(double k, const ParameterSet& other);
  void scale(double k);

  /// Entries of both sets, this set's first. Names must stay unique.
  ParameterSet merged(const ParameterSet& other) const;
  /// The entries whose names start with the prefix, with the prefix removed.
  ParameterSet with_prefix_removed(const std::string& prefix) const;
  ParameterSet with_prefix(const std::string& prefix) const;

  friend bool operator==(const ParameterSet& a, const ParameterSet& b);

 private:
  std::vector<Entry> entries_;
};

}  // namespace nirm::ad
