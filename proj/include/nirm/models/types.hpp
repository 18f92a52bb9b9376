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

#include <array>
#include <cstddef>
#include <span>
#include <vector>

#include "nirm/ad/tensor.hpp"

namespace nirm::models {

struct ArchitectureConfig {
  std::size_t latent_dim = 8;
  std::vector<std::size_t> decoder_hidden{64, 64, 64};
  std::vector<std::size_t> encoder_hidden{64, 64};
  std::vector<std::size_t> critic_hidden{64, 64};
  double horizon = 3.0;  // s
  std::size_t n_points = 16;
  double v_max = 10.0;  // m/s
  std::size_t invariant_dim = 8;
  std::size_t spurious_dim = 8;

  /// Throws std::invalid_argument naming the first bad field.
  void validate() const;

  /// Encoder input width: both feature blocks plus normalized speed.
  std::size_t observation_dim() const { return invariant_dim + spurious_dim + 1; }
  /// Critic input width: flattened trajectory plus speed.
  std::size_t critic_input_dim() const { return 2 * n_points + 1; }
  /// Fixed gain on the decoder's raw outputs, the farthest reachable distance.
  double displacement_scale() const { return v_max * horizon; }

  friend bool operator==(const ArchitectureConfig&, const ArchitectureConfig&) = default;
};

struct LatentVector {
  std::vector<double> values;
};

struct TrajectoryPoint {
  double longitudinal = 0.0;  // m
  double lateral = 0.0;       // m
  double query_time = 0.0;    // s
};

struct Trajectory {
  std::vector<TrajectoryPoint> points;
  double condition_speed = 0.0;  // m/s

  /// (long_1, lat_1, ..., long_N, lat_N).
  std::vector<double> flatten() const;
  static Trajectory from_flat(std::span<const double> flat, std::span<const double> times, double speed);
};

struct TrajectoryDerivatives {
  std::vector<std::array<double, 2>> velocity;      // m/s
  std::vector<std::array<double, 2>> acceleration;  // m/s²
};

/// t_k = k·horizon/N for k = 1..N.
std::vector<double> time_grid(double horizon, std::size_t n_points);

}  // namespace nirm::models
