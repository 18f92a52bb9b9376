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
#include <vector>

#include "nirm/ad/parameter_set.hpp"
#include "nirm/core/random.hpp"
#include "nirm/pipelines/config.hpp"

namespace nirm::pipelines {

/// Adaptive moment estimation with bias correction.
class Adam {
 public:
  Adam(const AdamConfig& cfg, std::size_t parameter_count);

  /// params -= k·lr·m̂/(√v̂ + ε), elementwise; k scales the configured rate.
  void step(std::span<double> params, std::span<const double> grad, double k = 1.0);
  void step(ad::ParameterSet& params, const ad::ParameterSet& grad, double k = 1.0);
  std::size_t steps_taken() const { return t_; }

 private:
  AdamConfig cfg_;
  std::vector<double> m_;
  std::vector<double> v_;
  std::size_t t_ = 0;
};

/// Minibatch indices drawn without replacement from reshuffled epochs.
class EpochSampler {
 public:
  EpochSampler(std::size_t population, Rng rng);
  std::vector<std::size_t> next(std::size_t batch);

 private:
  void reshuffle();
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
  Rng rng_;
};

}  // namespace nirm::pipelines
