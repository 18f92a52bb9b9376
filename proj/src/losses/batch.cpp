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

#include "nirm/losses/batch.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "nirm/models/networks.hpp"

namespace nirm::losses {

void EnvironmentBatch::validate() const {
  if (observations.empty()) throw std::invalid_argument("environment batch is empty");
  if (truths.size() != observations.size()) {
    throw std::invalid_argument("environment batch: " + std::to_string(observations.size()) + " observations but " +
                                std::to_string(truths.size()) + " trajectories");
  }
  for (const auto& o : observations) {
    if (o.environment_id != environment_id) {
      throw std::invalid_argument("environment batch " + std::to_string(environment_id) +
                                  " holds a sample from environment " + std::to_string(o.environment_id));
    }
  }
}

PreparedBatch prepare(const EnvironmentBatch& batch, const models::ArchitectureConfig& arch) {
  batch.validate();
  const std::vector<double> grid = models::time_grid(arch.horizon, arch.n_points);
  PreparedBatch out;
  out.environment_id = batch.environment_id;
  out.observations = models::observation_matrix(batch.observations, arch);
  out.truths = ad::Tensor<double>::matrix(batch.size(), 2 * arch.n_points);
  out.speeds.reserve(batch.size());
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const models::Trajectory& t = batch.truths[b];
    if (t.points.size() != arch.n_points) {
      throw std::invalid_argument("sample " + std::to_string(b) + ": trajectory has " +
                                  std::to_string(t.points.size()) + " points, expected " +
                                  std::to_string(arch.n_points));
    }
    for (std::size_t k = 0; k < arch.n_points; ++k) {
      if (std::abs(t.points[k].query_time - grid[k]) > 1e-9) {
        throw std::invalid_argument("sample " + std::to_string(b) + ": time grid mismatch at point " +
                                    std::to_string(k));
      }
      out.truths.at(b, 2 * k) = t.points[k].longitudinal;
      out.truths.at(b, 2 * k + 1) = t.points[k].lateral;
    }
    out.speeds.push_back(batch.observations[b].speed);
  }
  return out;
}

PreparedBatch select(const PreparedBatch& batch, const std::vector<std::size_t>& rows) {
  PreparedBatch out;
  out.environment_id = batch.environment_id;
  out.observations = ad::Tensor<double>::matrix(rows.size(), batch.observations.cols());
  out.truths = ad::Tensor<double>::matrix(rows.size(), batch.truths.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const std::size_t r = rows[i];
    if (r >= batch.size()) throw std::out_of_range("select: row " + std::to_string(r) + " out of range");
    for (std::size_t c = 0; c < batch.observations.cols(); ++c) out.observations.at(i, c) = batch.observations.at(r, c);
    for (std::size_t c = 0; c < batch.truths.cols(); ++c) out.truths.at(i, c) = batch.truths.at(r, c);
    out.speeds.push_back(batch.speeds[r]);
  }
  return out;
}

PreparedBatch slice(const PreparedBatch& batch, std::size_t begin, std::size_t end) {
  if (begin > end || end > batch.size()) throw std::out_of_range("slice: bad row range");
  std::vector<std::size_t> rows;
  for (std::size_t r = begin; r < end; ++r) rows.push_back(r);
  return select(batch, rows);
}

}  // namespace nirm::losses
