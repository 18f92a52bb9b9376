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

#include "nirm/pipelines/variants.hpp"

#include <functional>

#include "nirm/core/io.hpp"
#include "nirm/losses/losses.hpp"
#include "nirm/models/checkpoint.hpp"
#include "nirm/models/models.hpp"

namespace nirm::pipelines {

using json_util::json;

VariantFlags variant_flags(Variant v) {
  switch (v) {
    case Variant::kOurs: return {true, true, "NIRM"};
    case Variant::kE2eNt: return {false, false, ""};
    case Variant::kE2eNtNirm: return {false, false, "NIRM"};
    case Variant::kRandomNtNirm: return {true, false, "NIRM"};
    case Variant::kTrajIrm: return {true, false, "IRMv1"};
    case Variant::kLatentIrmv1: return {true, true, "IRMv1"};
  }
  throw std::invalid_argument("unknown variant");
}

std::optional<StageOutput> MemoryStageStore::find(const std::string& stage, const std::string& digest) {
  auto it = outputs_.find(digest);
  if (it == outputs_.end() || it->second.name != stage) return std::nullopt;
  return it->second;
}

void MemoryStageStore::put(const StageOutput& output) { outputs_[output.digest] = output; }

std::vector<std::string> variant_stages(Variant v) {
  switch (v) {
    case Variant::kOurs: return {"decoder_gan", "latent_inference", "pretrain", "finetune"};
    case Variant::kE2eNt:
    case Variant::kE2eNtNirm: return {"joint"};
    case Variant::kRandomNtNirm: return {"finetune"};
    case Variant::kTrajIrm: return {"traj_irm"};
    case Variant::kLatentIrmv1: return {"decoder_gan", "latent_inference", "pretrain", "latent_irmv1"};
  }
  throw std::invalid_argument("unknown variant");
}

double training_risk(const ad::ParameterSet& theta, const ad::ParameterSet& w, const TrainingSet& data,
                     const TrainConfig& cfg) {
  double total = 0.0;
  for (const auto& env : data.environments) total += losses::batch_risk(theta, w, env, cfg.risk, cfg.arch);
  return total / static_cast<double>(data.environments.size());
}

namespace {

std::string stage_digest(const std::string& stage, const std::string& upstream, const json& fields) {
  return io::sha256_hex(json{{"stage", stage}, {"upstream", upstream}, {"fields", fields}}.dump());
}

json optimizer_json(const AdamConfig& a) {
  return json{{"learning_rate", a.learning_rate}, {"beta1", a.beta1}, {"beta2", a.beta2}, {"epsilon", a.epsilon}};
}

class Runner {
 public:
  Runner(StageStore* store, VariantRun& run) : store_(store), run_(run) {}

  const StageOutput& stage(const std::string& name, const std::string& digest,
                           const std::function<StageOutput()>& compute) {
    std::optional<StageOutput> found = store_ != nullptr ? store_->find(name, digest) : std::nullopt;
    const bool reused = found.has_value();
    StageOutput out = reused ? std::move(*found) : compute();
    out.name = name;
    out.digest = digest;
    if (!reused && store_ != nullptr) store_->put(out);
    run_.stages.push_back(std::move(out));
    run_.reused.push_back(reused);
    return run_.stages.back();
  }

 private:
  StageStore* store_;
  VariantRun& run_;
};

const ad::ParameterSet& artifact(const StageOutput& s, const std::string& stem) {
  auto it = s.artifacts.find(stem);
  if (it == s.artifacts.end()) throw StageOrderError("stage " + s.name + " has no " + stem + " artifact");
  return it->second;
}

}  // namespace

VariantRun train_variant(const TrainingSet& data, const TrainConfig& cfg, StageStore* store) {
  cfg.validate();
  VariantRun run;
  run.variant = cfg.variant;
  // Stage pointers below stay valid because the vector never reallocates.
  run.stages.reserve(4);
  Runner runner(store, run);
  const json full = to_json(cfg);
  const auto& arch = cfg.arch;

  // Stages 1 and 2 are shared by every variant that pretrains the decoder.
  std::string upstream = data.digest;
  const StageOutput* gan = nullptr;
  const StageOutput* latents = nullptr;
  const StageOutput* pretrained = nullptr;
  if (variant_flags(cfg.variant).decoder_pretrained) {
    const json gan_fields{{"seed", cfg.seed},
                          {"architecture", full.at("architecture")},
                          {"batch_size", cfg.batch_size},
                          {"log_every", cfg.log_every},
                          {"gan_steps", cfg.gan_steps},
                          {"critic_steps", cfg.critic_steps},
                          {"gp_weight", cfg.gp_weight},
                          {"gan_optimizer", optimizer_json(cfg.gan_optimizer)}};
    upstream = stage_digest("decoder_gan", upstream, gan_fields);
    gan = &runner.stage("decoder_gan", upstream, [&] {
      GanResult g = train_decoder_gan(data, cfg);
      StageOutput out;
      out.artifacts["decoder"] = std::move(g.decoder);
      out.artifacts["critic"] = std::move(g.critic);
      out.curve = std::move(g.curve);
      return out;
    });

    const json latent_fields{{"risk", full.at("risk")},
                             {"latent_steps", cfg.latent_steps},
                             {"latent_optimizer", optimizer_json(cfg.latent_optimizer)},
                             {"latent_penalty_weight", cfg.latent_penalty_weight},
                             {"latent_samples_per_env", cfg.latent_samples_per_env}};
    upstream = stage_digest("latent_inference", upstream, latent_fields);
    const ad::ParameterSet& w0 = artifact(*gan, "decoder");
    latents = &runner.stage("latent_inference", upstream, [&] {
      LatentTable table = infer_latents(w0, data, cfg);
      StageOutput out;
      json flagged = json::array();
      double objective = 0.0, initial = 0.0;
      for (const auto& e : table.entries) {
        if (!e.finite) {
          flagged.push_back(json{{"environment_id", e.environment_id}, {"row", e.row}});
          continue;
        }
        objective += e.objective;
        initial += e.initial_objective;
      }
      const double retained = static_cast<double>(std::max<std::size_t>(table.retained(), 1));
      out.summary = json{{"samples", table.entries.size()},
                         {"retained", table.retained()},
                         {"flagged", flagged},
                         {"mean_initial_objective", initial / retained},
                         {"mean_objective", objective / retained}};
      out.artifacts["latents"] = table.to_parameters(arch.latent_dim);
      return out;
    });

    const json pretrain_fields{{"regression_steps", cfg.regression_steps},
                               {"regression_optimizer", optimizer_json(cfg.regression_optimizer)}};
    upstream = stage_digest("pretrain", upstream, pretrain_fields);
    pretrained = &runner.stage("pretrain", upstream, [&] {
      EncoderResult r = pretrain_encoder(LatentTable::from_parameters(artifact(*latents, "latents")), data, cfg);
      StageOutput out;
      out.summary = json{{"final_mse", r.final_mse}};
      out.artifacts["encoder_pretrained"] = std::move(r.encoder);
      out.curve = std::move(r.curve);
      return out;
    });
  }

  const std::string final_digest = stage_digest(variant_stages(cfg.variant).back(), upstream, full);
  switch (cfg.variant) {
    case Variant::kOurs:
    case Variant::kRandomNtNirm: {
      ad::ParameterSet w0, theta0;
      if (cfg.variant == Variant::kOurs) {
        w0 = artifact(*gan, "decoder");
        theta0 = artifact(*pretrained, "encoder_pretrained");
      } else {
        w0 = models::init_decoder(arch, cfg.seed);
        theta0 = models::init_encoder(arch, cfg.seed);
      }
      const StageOutput& s = runner.stage("finetune", final_digest, [&] {
        FinetuneResult r = finetune_encoder_nirm(theta0, w0, data, cfg);
        StageOutput out;
        out.summary = json{{"training_risk_initial", training_risk(theta0, w0, data, cfg)},
                           {"training_risk_final", training_risk(r.encoder, w0, data, cfg)},
                           {"decoder_sha256", models::parameter_digest(w0)}};
        out.artifacts["model"] = TrainedModel{ModelKind::kLatentDecoder, std::move(r.encoder), w0}.merged();
        out.curve = std::move(r.curve);
        return out;
      });
      run.model = TrainedModel::from_merged(artifact(s, "model"), arch);
      break;
    }
    case Variant::kE2eNt:
    case Variant::kE2eNtNirm: {
      const double lambda = cfg.variant == Variant::kE2eNt ? 0.0 : cfg.risk.lambda_irm;
      const StageOutput& s = runner.stage("joint", final_digest, [&] {
        JointResult r = train_joint(data, cfg, lambda);
        StageOutput out;
        out.summary = json{{"lambda", lambda}, {"training_risk_final", training_risk(r.encoder, r.decoder, data, cfg)}};
        out.artifacts["model"] = TrainedModel{ModelKind::kLatentDecoder, std::move(r.encoder), std::move(r.decoder)}.merged();
        out.curve = std::move(r.curve);
        return out;
      });
      run.model = TrainedModel::from_merged(artifact(s, "model"), arch);
      break;
    }
    case Variant::kTrajIrm: {
      const StageOutput& s = runner.stage("traj_irm", final_digest, [&] {
        PointHeadResult r = train_traj_irm(data, cfg);
        StageOutput out;
        out.artifacts["model"] = TrainedModel{ModelKind::kPointHead, std::move(r.encoder), std::move(r.head)}.merged();
        out.curve = std::move(r.curve);
        return out;
      });
      run.model = TrainedModel::from_merged(artifact(s, "model"), arch);
      break;
    }
    case Variant::kLatentIrmv1: {
      const ad::ParameterSet& w0 = artifact(*gan, "decoder");
      const StageOutput& s = runner.stage("latent_irmv1", final_digest, [&] {
        EncoderResult r = train_latent_irmv1(artifact(*pretrained, "encoder_pretrained"),
                                             LatentTable::from_parameters(artifact(*latents, "latents")), data, cfg);
        StageOutput out;
        out.summary = json{{"training_risk_final", training_risk(r.encoder, w0, data, cfg)}};
        out.artifacts["model"] = TrainedModel{ModelKind::kLatentDecoder, std::move(r.encoder), w0}.merged();
        out.curve = std::move(r.curve);
        return out;
      });
      run.model = TrainedModel::from_merged(artifact(s, "model"), arch);
      break;
    }
  }
  return run;
}

}  // namespace nirm::pipelines
