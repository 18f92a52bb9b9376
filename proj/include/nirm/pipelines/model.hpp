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

#include <cstdint>
#include <span>

#include "nirm/ad/engine.hpp"
#include "nirm/models/networks.hpp"
#include "nirm/models/types.hpp"

namespace nirm::pipelines {

/// Encoder followed by the continuous decoder, or by a linear map straight
/// to the 2N grid coordinates.
enum class ModelKind { kLatentDecoder, kPointHead };

struct TrainedModel {
  ModelKind kind = ModelKind::kLatentDecoder;
  ad::ParameterSet encoder;
  ad::ParameterSet output;  // decoder, or point head

  /// Prefixed "encoder." plus "decoder." or "head.".
  ad::ParameterSet merged() const;
  /// Inverse of merged(); checks both layouts against arch.
  static TrainedModel from_merged(const ad::ParameterSet& params, const models::ArchitectureConfig& arch);
};

ad::ParameterSet init_point_head(const models::ArchitectureConfig& arch, std::uint64_t seed);

/// head(encoder(obs)) scaled to metres: B×2N, not anchored at the origin.
template <ad::Scalar T>
ad::Var<T> point_head_outputs(const ad::Bound<T>& encoder, const ad::Bound<T>& head, ad::Var<T> observations,
                              const models::ArchitectureConfig& arch) {
  ad::Var<T> z = models::encoder_latents(encoder, observations);
  return ad::scale(models::mlp(head, z, models::Activation::kNone), arch.displacement_scale());
}

/// B×2N flattened trajectories on the model's time grid.
ad::Tensor<double> predict(const TrainedModel& model, const ad::Tensor<double>& observations,
                           std::span<const double> speeds, const models::ArchitectureConfig& arch);

}  // namespace nirm::pipelines
