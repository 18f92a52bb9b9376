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
#include <string>
#include <vector>

#include "nirm/ad/tensor.hpp"
#include "nirm/models/types.hpp"
#include "nirm/synthdata/observation.hpp"

namespace nirm::losses {

/// Samples from one environment (or one label-free minibatch).
struct EnvironmentBatch {
  int environment_id = 0;
  std::string split;  // "train", "id", "ood" or a minibatch tag
  std::vector<synthdata::Observation> observations;
  std::vector<models::Trajectory> truths;

  std::size_t size() const { return observations.size(); }
  /// Non-empty, parallel arrays, one environment tag.
  void validate() const;
};

/// Tensor view of a batch, ready to be placed on a tape.
struct PreparedBatch {
  int environment_id = 0;
  ad::Tensor<double> observations;  // B×observation_dim
  ad::Tensor<double> truths;        // B×2N
  std::vector<double> speeds;       // B

  std::size_t size() const { return speeds.size(); }
};

/// Validates feature widths and the time grid against the architecture.
PreparedBatch prepare(const EnvironmentBatch& batch, const models::ArchitectureConfig& arch);

/// Rows [begin, end) of a prepared batch.
PreparedBatch slice(const PreparedBatch& batch, std::size_t begin, std::size_t end);
/// Rows in the given order.
PreparedBatch select(const PreparedBatch& batch, const std::vector<std::size_t>& rows);

}  // namespace nirm::losses
