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

#include "nirm/pipelines/config.hpp"

#include "nirm/models/checkpoint.hpp"

#include <cmath>
#include <stdexcept>

namespace nirm::pipelines {

using json_util::ConfigError;
using json_util::json;
using json_util::ObjectReader;

namespace {

struct VariantName {
  Variant variant;
  const char* tag;
};

constexpr VariantName kVariants[] = {
    {Variant::kE2eNt, "e2e_nt"},       {Variant::kE2eNtNirm, "e2e_nt_nirm"},
    {Variant::kRandomNtNirm, "random_nt_nirm"}, {Variant::kTrajIrm, "traj_irm"},
    {Variant::kLatentIrmv1, "latent_irmv1"},    {Variant::kOurs, "ours"},
};

json to_json(const AdamConfig& a) {
  return json{{"learning_rate", a.learning_rate}, {"beta1", a.beta1}, {"beta2", a.beta2}, {"epsilon", a.epsilon}};
}

AdamConfig adam_from_json(const json& j, const std::string& path, AdamConfig a) {
  ObjectReader r(j, path);
  r.optional("learning_rate", a.learning_rate);
  r.optional("beta1", a.beta1);
  r.optional("beta2", a.beta2);
  r.optional("epsilon", a.epsilon);
  r.finish();
  if (!(a.learning_rate > 0.0)) ObjectReader::fail(r.field("learning_rate"), "must be > 0");
  if (!(a.beta1 >= 0.0 && a.beta1 < 1.0)) ObjectReader::fail(r.field("beta1"), "must lie in [0, 1)");
  if (!(a.beta2 >= 0.0 && a.beta2 < 1.0)) ObjectReader::fail(r.field("beta2"), "must lie in [0, 1)");
  if (!(a.epsilon > 0.0)) ObjectReader::fail(r.field("epsilon"), "must be > 0");
  return a;
}

std::string mode_name(EnvironmentMode m) { return m == EnvironmentMode::kLabels ? "labels" : "minibatch"; }

}  // namespace

const std::vector<Variant>& all_variants() {
  static const std::vector<Variant> v = [] {
    std::vector<Variant> out;
    for (const auto& n : kVariants) out.push_back(n.variant);
    return out;
  }();
  return v;
}

std::string to_string(Variant v) {
  for (const auto& n : kVariants) {
    if (n.variant == v) return n.tag;
  }
  throw std::invalid_argument("unknown variant");
}

Variant variant_from_string(const std::string& tag) {
  std::string accepted;
  for (const auto& n : kVariants) {
    if (tag == n.tag) return n.variant;
    accepted += accepted.empty() ? n.tag : std::string(", ") + n.tag;
  }
  throw std::invalid_argument("unknown variant \"" + tag + "\" (expected one of " + accepted + ")");
}

TrainConfig benchmark_profile(Variant variant, std::uint64_t seed) {
  TrainConfig c;
  c.seed = seed;
  c.variant = variant;
  c.arch.decoder_hidden = {32, 32, 32};
  c.arch.encoder_hidden = {32, 32};
  c.arch.critic_hidden = {32, 32};
  c.log_every = 250;
  c.gan_steps = 1500;
  c.latent_samples_per_env = 250;
  c.regression_steps = 3000;
  c.regression_optimizer.learning_rate = 1e-3;
  c.finetune_steps = 1500;
  // ||grad_w R||^2 is about 1e4 to 1e5 times R here, so λ = 1 would drown the risk.
  c.risk.lambda_irm = 1e-5;
  c.lambda_warmup_fraction = 0.2;
  return c;
}

void TrainConfig::validate() const {
  try {
    arch.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("architecture.") + e.what());
  }
  try {
    risk.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("risk.") + e.what());
  }
  if (batch_size == 0) throw ConfigError("batch_size: must be > 0");
  if (log_every == 0) throw ConfigError("log_every: must be > 0");
  if (critic_steps == 0) throw ConfigError("critic_steps: must be > 0");
  if (!(gp_weight >= 0.0)) throw ConfigError("gp_weight: must be >= 0");
  if (!(latent_penalty_weight >= 0.0)) throw ConfigError("latent_penalty_weight: must be >= 0");
  if (!(lambda_warmup_fraction >= 0.0 && lambda_warmup_fraction <= 1.0)) {
    throw ConfigError("lambda_warmup_fraction: must lie in [0, 1]");
  }
}

json to_json(const losses::RiskConfig& r) {
  return json{{"alpha", r.alpha}, {"lambda_irm", r.lambda_irm}, {"lambda_z", r.lambda_z}};
}

losses::RiskConfig risk_from_json(const json& j, const std::string& path) {
  ObjectReader r(j, path);
  losses::RiskConfig c;
  r.optional("alpha", c.alpha);
  r.optional("lambda_irm", c.lambda_irm);
  r.optional("lambda_z", c.lambda_z);
  r.finish();
  try {
    c.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError((path.empty() ? std::string() : path + ".") + e.what());
  }
  return c;
}

json to_json(const TrainConfig& c) {
  return json{{"seed", c.seed},
              {"variant", to_string(c.variant)},
              {"architecture", models::to_json(c.arch)},
              {"risk", to_json(c.risk)},
              {"batch_size", c.batch_size},
              {"environment_mode", mode_name(c.environment_mode)},
              {"log_every", c.log_every},
              {"gan_steps", c.gan_steps},
              {"critic_steps", c.critic_steps},
              {"gp_weight", c.gp_weight},
              {"gan_optimizer", to_json(c.gan_optimizer)},
              {"latent_steps", c.latent_steps},
              {"latent_optimizer", to_json(c.latent_optimizer)},
              {"latent_penalty_weight", c.latent_penalty_weight},
              {"latent_samples_per_env", c.latent_samples_per_env},
              {"regression_steps", c.regression_steps},
              {"regression_optimizer", to_json(c.regression_optimizer)},
              {"finetune_steps", c.finetune_steps},
              {"finetune_optimizer", to_json(c.finetune_optimizer)},
              {"lambda_warmup_fraction", c.lambda_warmup_fraction}};
}

TrainConfig train_config_from_json(const json& j, const std::string& path) {
  ObjectReader r(j, path);
  TrainConfig c;
  r.optional("seed", c.seed);
  std::string variant = to_string(c.variant);
  r.optional("variant", variant);
  try {
    c.variant = variant_from_string(variant);
  } catch (const std::invalid_argument& e) {
    ObjectReader::fail(r.field("variant"), e.what());
  }
  if (const json* a = r.child("architecture")) c.arch = models::architecture_from_json(*a, r.field("architecture"));
  if (const json* k = r.child("risk")) c.risk = risk_from_json(*k, r.field("risk"));
  r.optional("batch_size", c.batch_size);
  std::string mode = mode_name(c.environment_mode);
  r.optional("environment_mode", mode);
  if (mode == "labels") {
    c.environment_mode = EnvironmentMode::kLabels;
  } else if (mode == "minibatch") {
    c.environment_mode = EnvironmentMode::kMinibatch;
  } else {
    ObjectReader::fail(r.field("environment_mode"), "expected \"labels\" or \"minibatch\"");
  }
  r.optional("log_every", c.log_every);
  r.optional("gan_steps", c.gan_steps);
  r.optional("critic_steps", c.critic_steps);
  r.optional("gp_weight", c.gp_weight);
  if (const json* o = r.child("gan_optimizer")) c.gan_optimizer = adam_from_json(*o, r.field("gan_optimizer"), c.gan_optimizer);
  r.optional("latent_steps", c.latent_steps);
  if (const json* o = r.child("latent_optimizer")) {
    c.latent_optimizer = adam_from_json(*o, r.field("latent_optimizer"), c.latent_optimizer);
  }
  r.optional("latent_penalty_weight", c.latent_penalty_weight);
  r.optional("latent_samples_per_env", c.latent_samples_per_env);
  r.optional("regression_steps", c.regression_steps);
  if (const json* o = r.child("regression_optimizer")) {
    c.regression_optimizer = adam_from_json(*o, r.field("regression_optimizer"), c.regression_optimizer);
  }
  r.optional("finetune_steps", c.finetune_steps);
  if (const json* o = r.child("finetune_optimizer")) {
    c.finetune_optimizer = adam_from_json(*o, r.field("finetune_optimizer"), c.finetune_optimizer);
  }
  r.optional("lambda_warmup_fraction", c.lambda_warmup_fraction);
  r.finish();
  try {
    c.validate();
  } catch (const ConfigError& e) {
    throw ConfigError((path.empty() ? std::string() : path + ".") + e.what());
  }
  return c;
}

}  // namespace nirm::pipelines
