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
#include <string>
#include <vector>

#include "nirm/core/json_util.hpp"
#include "nirm/losses/losses.hpp"
#include "nirm/models/types.hpp"

namespace nirm::pipelines {

enum class Variant { kOurs, kE2eNt, kE2eNtNirm, kRandomNtNirm, kTrajIrm, kLatentIrmv1 };

/// All variants in table order.
const std::vector<Variant>& all_variants();
std::string to_string(Variant v);
/// Throws std::invalid_argument listing the accepted tags.
Variant variant_from_string(const std::string& tag);

/// How the environment sum is formed: from dataset labels, or by treating
/// each pooled minibatch as its own environment term.
enum class EnvironmentMode { kLabels, kMinibatch };

struct AdamConfig {
  double learning_rate = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  friend bool operator==(const AdamConfig&, const AdamConfig&) = default;
};

struct TrainConfig {
  std::uint64_t seed = 0;
  Variant variant = Variant::kOurs;
  models::ArchitectureConfig arch;
  losses::RiskConfig risk;
  std::size_t batch_size = 32;
  EnvironmentMode environment_mode = EnvironmentMode::kLabels;
  std::size_t log_every = 50;

  // Adversarial decoder pretraining.
  std::size_t gan_steps = 20000;  // generator updates
  std::size_t critic_steps = 5;   // critic updates per generator update
  double gp_weight = 10.0;
  AdamConfig gan_optimizer{3e-4, 0.5, 0.9, 1e-8};

  // Latent inference and encoder regression.
  std::size_t latent_steps = 200;
  AdamConfig latent_optimizer{0.1, 0.5, 0.9, 1e-8};
  /// λ inside the per-sample inversion objective; risk.lambda_irm elsewhere.
  double latent_penalty_weight = 0.0;
  /// Samples per training environment to invert; 0 inverts all of them.
  std::size_t latent_samples_per_env = 0;
  std::size_t regression_steps = 5000;
  AdamConfig regression_optimizer{3e-4, 0.9, 0.999, 1e-8};

  // Fixed-decoder fine-tuning, also the step budget of every baseline.
  std::size_t finetune_steps = 5000;
  AdamConfig finetune_optimizer{3e-4, 0.9, 0.999, 1e-8};
  /// Fraction of fine-tuning steps run with λ = 0 before the penalty starts.
  double lambda_warmup_fraction = 0.0;

  /// Throws json_util::ConfigError naming the field.
  void validate() const;
  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

/// Desk-scale settings for the synthetic benchmark: width-32 networks,
/// short stage budgets and a penalty weight matched to the risk scale.
TrainConfig benchmark_profile(Variant variant, std::uint64_t seed);

json_util::json to_json(const losses::RiskConfig& risk);
losses::RiskConfig risk_from_json(const json_util::json& j, const std::string& path);
json_util::json to_json(const TrainConfig& cfg);
/// Fields absent from j keep their defaults; unknown keys are rejected.
TrainConfig train_config_from_json(const json_util::json& j, const std::string& path);

}  // namespace nirm::pipelines
