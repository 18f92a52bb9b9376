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

#include "nirm/pipelines/optim.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace nirm::pipelines {

Adam::Adam(const AdamConfig& cfg, std::size_t parameter_count)
    : cfg_(cfg), m_(parameter_count, 0.0), v_(parameter_count, 0.0) {}

void Adam::step(std::span<double> params, std::span<const double> grad, double k) {
  if (params.size() != m_.size() || grad.size() != m_.size()) {
    throw std::invalid_argument("adam: expected " + std::to_string(m_.size()) + " values, got " +
                                std::to_string(params.size()) + " parameters and " + std::to_string(grad.size()) +
                                " gradients");
  }
  ++t_;
  const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    m_[i] = cfg_.beta1 * m_[i] + (1.0 - cfg_.beta1) * grad[i];
    v_[i] = cfg_.beta2 * v_[i] + (1.0 - cfg_.beta2) * grad[i] * grad[i];
    const double m_hat = m_[i] / c1;
    const double v_hat = v_[i] / c2;
    params[i] -= k * cfg_.learning_rate * m_hat / (std::sqrt(v_hat) + cfg_.epsilon);
  }
}

void Adam::step(ad::ParameterSet& params, const ad::ParameterSet& grad, double k) {
  if (!params.same_layout(grad)) throw std::invalid_argument("adam: gradient layout differs from parameters");
  std::vector<double> flat = params.flatten();
  step(std::span<double>(flat), grad.flatten(), k);
  params.unflatten(flat);
}

EpochSampler::EpochSampler(std::size_t population, Rng rng) : order_(population), rng_(std::move(rng)) {
  if (population == 0) throw std::invalid_argument("sampler: empty population");
  std::iota(order_.begin(), order_.end(), std::size_t{0});
  reshuffle();
}

void EpochSampler::reshuffle() {
  // Fisher–Yates with the project RNG so the order is portable.
  for (std::size_t i = order_.size(); i > 1; --i) std::swap(order_[i - 1], order_[rng_.index(i)]);
  cursor_ = 0;
}

std::vector<std::size_t> EpochSampler::next(std::size_t batch) {
  std::vector<std::size_t> out;
  out.reserve(batch);
  while (out.size() < batch) {
    if (cursor_ == order_.size()) reshuffle();
    out.push_back(order_[cursor_++]);
  }
  return out;
}

}  // namespace nirm::pipelines
