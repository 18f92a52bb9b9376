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

// Network bodies as tape programs, generic over the scalar type so the same
// code serves values, gradients, gradient-of-gradient and time derivatives.
//
// A multilayer perceptron's parameter set holds, for each layer i in order,
// "l<i>.weight" (fan_in×fan_out) then "l<i>.bias" (fan_out).

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "nirm/ad/engine.hpp"
#include "nirm/core/random.hpp"
#include "nirm/models/types.hpp"
#include "nirm/synthdata/observation.hpp"

namespace nirm::models {

enum class Activation { kTanh, kSoftplus, kNone };

/// Uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)] for weights and biases.
ad::ParameterSet init_mlp(std::size_t in, const std::vector<std::size_t>& hidden, std::size_t out, Rng& rng);

/// Throws std::invalid_argument unless the set is an MLP with exactly these widths.
void check_mlp_layout(const ad::ParameterSet& p, std::size_t in, const std::vector<std::size_t>& hidden,
                      std::size_t out, const char* network);

template <ad::Scalar T>
ad::Var<T> mlp(const ad::Bound<T>& p, ad::Var<T> x, Activation hidden_activation) {
  const std::size_t layers = p.size() / 2;
  for (std::size_t i = 0; i < layers; ++i) {
    x = ad::affine(x, p.at(2 * i), p.at(2 * i + 1));
    if (i + 1 == layers) break;
    switch (hidden_activation) {
      case Activation::kTanh: x = ad::tanh(x); break;
      case Activation::kSoftplus: x = ad::softplus(x); break;
      case Activation::kNone: break;
    }
  }
  return x;
}

/// Un-anchored decoder f(t, z, v) on rows of (t/horizon, z, v/v_max).
template <ad::Scalar T>
ad::Var<T> decoder_raw(const ad::Bound<T>& w, ad::Var<T> t_col, ad::Var<T> z_rows, ad::Var<T> v_col,
                       const ArchitectureConfig& arch) {
  ad::Var<T> input = ad::concat_cols(std::vector<ad::Var<T>>{t_col, z_rows, v_col});
  return ad::scale(mlp(w, input, Activation::kTanh), arch.displacement_scale());
}

/// Displacements y(t) = f(t, z, v) − f(0, z, v) for every (sample, time) pair.
/// z is B×d_z; the result is (B·Q)×2 with sample-major rows, so reshaping
/// to B×2Q gives the flattened trajectories.
template <ad::Scalar T>
ad::Var<T> decoder_displacements(ad::Tape<T>& tape, const ad::Bound<T>& w, ad::Var<T> z,
                                 std::span<const double> speeds, std::span<const double> times,
                                 const ArchitectureConfig& arch) {
  const std::size_t batch = speeds.size();
  const std::size_t queries = times.size();
  const std::size_t grid_rows = batch * queries;
  const std::size_t rows = grid_rows + batch;
  ad::Tensor<double> t_col = ad::Tensor<double>::matrix(rows, 1);
  ad::Tensor<double> v_col = ad::Tensor<double>::matrix(rows, 1);
  std::vector<std::size_t> z_index(rows);
  std::vector<std::size_t> grid_index(grid_rows);
  std::vector<std::size_t> anchor_index(grid_rows);
  for (std::size_t b = 0; b < batch; ++b) {
    const double v = speeds[b] / arch.v_max;
    for (std::size_t q = 0; q < queries; ++q) {
      const std::size_t r = b * queries + q;
      t_col[r] = times[q] / arch.horizon;
      v_col[r] = v;
      z_index[r] = b;
      grid_index[r] = r;
      anchor_index[r] = grid_rows + b;
    }
    t_col[grid_rows + b] = 0.0;
    v_col[grid_rows + b] = v;
    z_index[grid_rows + b] = b;
  }
  ad::Var<T> raw = decoder_raw(w, tape.constant(t_col), ad::gather_rows(z, std::move(z_index)),
                               tape.constant(v_col), arch);
  return ad::gather_rows(raw, std::move(grid_index)) - ad::gather_rows(raw, std::move(anchor_index));
}

/// B×2N flattened trajectories on the configured time grid.
template <ad::Scalar T>
ad::Var<T> decoder_trajectories(ad::Tape<T>& tape, const ad::Bound<T>& w, ad::Var<T> z,
                                std::span<const double> speeds, const ArchitectureConfig& arch) {
  const std::vector<double> times = time_grid(arch.horizon, arch.n_points);
  ad::Var<T> points = decoder_displacements(tape, w, z, speeds, times, arch);
  return ad::reshape(points, ad::Shape{speeds.size(), 2 * arch.n_points});
}

/// B×d_z latents from B×observation_dim encoder inputs.
template <ad::Scalar T>
ad::Var<T> encoder_latents(const ad::Bound<T>& theta, ad::Var<T> observations) {
  return mlp(theta, observations, Activation::kTanh);
}

/// B×1 critic scores from B×(2N+1) inputs; no output squashing.
template <ad::Scalar T>
ad::Var<T> critic_scores(const ad::Bound<T>& params, ad::Var<T> inputs) {
  return mlp(params, inputs, Activation::kSoftplus);
}

/// Encoder inputs: invariant features, spurious features, speed / v_max.
ad::Tensor<double> observation_matrix(std::span<const synthdata::Observation> obs, const ArchitectureConfig& arch);

}  // namespace nirm::models
