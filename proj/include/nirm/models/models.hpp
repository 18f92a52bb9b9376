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

// Value-level entry points for the trajectory decoder G(t, z, v), the
// observation encoder and the Wasserstein critic.

#include <array>
#include <cstdint>
#include <span>

#include "nirm/ad/parameter_set.hpp"
#include "nirm/models/networks.hpp"
#include "nirm/models/types.hpp"
#include "nirm/synthdata/observation.hpp"

namespace nirm::models {

ad::ParameterSet init_decoder(const ArchitectureConfig& arch, std::uint64_t seed);
ad::ParameterSet init_encoder(const ArchitectureConfig& arch, std::uint64_t seed);
ad::ParameterSet init_critic(const ArchitectureConfig& arch, std::uint64_t seed);

void check_decoder(const ad::ParameterSet& w, const ArchitectureConfig& arch);
void check_encoder(const ad::ParameterSet& theta, const ArchitectureConfig& arch);
void check_critic(const ad::ParameterSet& params, const ArchitectureConfig& arch);

/// Displacement (longitudinal, lateral) in meters at time t. Exactly (0, 0)
/// at t = 0. Throws std::out_of_range for t outside [0, horizon] or v outside
/// [0, v_max].
std::array<double, 2> decode(const ad::ParameterSet& w, double t, const LatentVector& z, double v,
                             const ArchitectureConfig& arch);

/// First and second time derivatives of the displacement, propagated through
/// the network with nested forward-mode numbers.
TrajectoryDerivatives decode_derivatives(const ad::ParameterSet& w, std::span<const double> times,
                                         const LatentVector& z, double v, const ArchitectureConfig& arch);

Trajectory decode_grid(const ad::ParameterSet& w, const LatentVector& z, double v, const ArchitectureConfig& arch);

LatentVector encode(const ad::ParameterSet& theta, const synthdata::Observation& obs, const ArchitectureConfig& arch);

/// Critic score for (long_1, lat_1, ..., long_N, lat_N) at speed v.
double critic_score(const ad::ParameterSet& params, std::span<const double> traj_points, double v,
                    const ArchitectureConfig& arch);

}  // namespace nirm::models
