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

#include "nirm/ad/parameter_set.hpp"

#include <algorithm>
#include <stdexcept>

namespace nirm::ad {

void ParameterSet::add(std::string name, Tensor<double> tensor) {
  if (contains(name)) throw std::invalid_argument("parameter set: duplicate name '" + name + "'");
  entries_.push_back({std::move(name), std::move(tensor)});
}

bool ParameterSet::contains(const std::string& name) const {
  return std::any_of(entries_.begin(), entries_.end(),
                     [&](const Entry& e) { return e.name == name; });
}

std::size_t ParameterSet::index_of(const std::string& name) const {
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    if (entries_[i].name == name) return i;
  }
  throw std::out_of_range("parameter set: no entry named '" + name + "'");
}

const Tensor<double>& ParameterSet::at(const std::string& name) const {
  return entries_[index_of(name)].tensor;
}

Tensor<double>& ParameterSet::at(const std::string& name) { return entries_[index_of(name)].tensor; }

std::size_t ParameterSet::parameter_count() const {
  std::size_t n = 0;
  for (const Entry& e : entries_) n += e.tensor.size();
  return n;
}

std::vector<double> ParameterSet::flatten() const {
  std::vector<double> out;
  out.reserve(parameter_count());
  for (const Entry& e : entries_) out.insert(out.end(), e.tensor.values().begin(), e.tensor.values().end());
  return out;
}

void ParameterSet::unflatten(std::span<const double> values) {
  if (values.size() != parameter_count()) {
    throw std::invalid_argument("parameter set: unflatten expects " + std::to_string(parameter_count()) +
                                " values, got " + std::to_string(values.size()));
  }
  std::size_t offset = 0;
  for (Entry& e : entries_) {
    std::copy_n(values.begin() + static_cast<std::ptrdiff_t>(offset), e.tensor.size(), e.tensor.values().begin());
    offset += e.tensor.size();
  }
}

ParameterSet ParameterSet::zeros_like() const {
  ParameterSet out;
  for (const Entry& e : entries_) out.add(e.name, Tensor<double>(e.tensor.shape(), 0.0));
  return out;
}

bool ParameterSet::same_layout(const ParameterSet& other) const {
  if (entries_.size() != other.entries_.size()) return false;
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    if (entries_[i].name != other.entries_[i].name ||
        entries_[i].tensor.shape() != other.entries_[i].tensor.shape()) {
      return false;
    }
  }
  return true;
}

double ParameterSet::squared_norm() const {
  double acc = 0.0;
  for (const Entry& e : entries_) {
    for (double v : e.tensor.values()) acc += v * v;
  }
  return acc;
}

void ParameterSet::axpy(double k, const ParameterSet& other) {
  if (!same_layout(other)) throw std::invalid_argument("parameter set: axpy layout mismatch");
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    auto& dst = entries_[i].tensor.values();
    const auto& src = other.entries_[i].tensor.values();
    for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += k * src[j];
  }
}

void ParameterSet::scale(double k) {
  for (Entry& e : entries_) {
    for (double& v : e.tensor.values()) v *= k;
  }
}

ParameterSet ParameterSet::merged(const ParameterSet& other) const {
  ParameterSet out = *this;
  for (const Entry& e : other.entries_) out.add(e.name, e.tensor);
  return out;
}

ParameterSet ParameterSet::with_prefix_removed(const std::string& prefix) const {
  ParameterSet out;
  for (const Entry& e : entries_) {
    if (e.name.starts_with(prefix)) out.add(e.name.substr(prefix.size()), e.tensor);
  }
  return out;
}

ParameterSet ParameterSet::with_prefix(const std::string& prefix) const {
  ParameterSet out;
  for (const Entry& e : entries_) out.add(prefix + e.name, e.tensor);
  return out;
}

bool operator==(const ParameterSet& a, const ParameterSet& b) {
  if (a.entries_.size() != b.entries_.size()) return false;
  for (std::size_t i = 0; i < a.entries_.size(); ++i) {
    if (a.entries_[i].name != b.entries_[i].name || !(a.entries_[i].tensor == b.entries_[i].tensor)) {
      return false;
    }
  }
  return true;
}

}  // namespace nirm::ad
