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

// Variants as sequences of named stages. A stage is identified by a digest
// of its inputs (data, upstream stage, relevant config), which lets a store
// hand back an earlier result instead of recomputing it.

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "nirm/core/json_util.hpp"
#include "nirm/pipelines/model.hpp"
#include "nirm/pipelines/training.hpp"

namespace nirm::pipelines {

/// Ablation-table flags: frozen decoder, decoder pretraining, penalty type.
struct VariantFlags {
  bool decoder_fixed = false;
  bool decoder_pretrained = false;
  std::string irm;  // "", "NIRM" or "IRMv1"
};
VariantFlags variant_flags(Variant v);

struct StageOutput {
  std::string name;
  std::string digest;
  std::map<std::string, ad::ParameterSet> artifacts;  // checkpoint stem → parameters
  LossCurve curve;
  json_util::json summary = json_util::json::object();
};

class StageStore {
 public:
  virtual ~StageStore() = default;
  virtual std::optional<StageOutput> find(const std::string& stage, const std::string& digest) = 0;
  virtual void put(const StageOutput& output) = 0;
};

/// Keeps results in memory, keyed by digest.
class MemoryStageStore : public StageStore {
 public:
  std::optional<StageOutput> find(const std::string& stage, const std::string& digest) override;
  void put(const StageOutput& output) override;

 private:
  std::map<std::string, StageOutput> outputs_;
};

struct VariantRun {
  Variant variant = Variant::kOurs;
  TrainedModel model;
  std::vector<StageOutput> stages;
  std::vector<bool> reused;  // parallel to stages
};

/// Stage names in execution order for a variant.
std::vector<std::string> variant_stages(Variant v);

/// Runs cfg.variant. The store, when given, is consulted before and
/// updated after every stage.
VariantRun train_variant(const TrainingSet& data, const TrainConfig& cfg, StageStore* store = nullptr);

/// Mean over environments of the full-environment batch risk.
double training_risk(const ad::ParameterSet& theta, const ad::ParameterSet& w, const TrainingSet& data,
                     const TrainConfig& cfg);

}  // namespace nirm::pipelines
