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

// On-disk runs. Layout of a run directory:
//
//   run.json             record: config, stages, checkpoint hashes
//   timings.json         wall-clock seconds per stage (not deterministic)
//   <stem>.json/.bin     one checkpoint per stage artifact; model.json is final
//   curves/<stage>.csv   loss curves
//   stages/<stage>.json  per-stage index used to resume

#include <cstdint>
#include <filesystem>
#include <string>

#include "nirm/core/json_util.hpp"
#include "nirm/pipelines/variants.hpp"

namespace nirm::pipelines {

inline constexpr int kRunSchemaVersion = 1;

/// Writes stage artifacts as checkpoints and finds them again by digest.
class DirectoryStageStore : public StageStore {
 public:
  DirectoryStageStore(std::filesystem::path dir, const TrainConfig& cfg);
  std::optional<StageOutput> find(const std::string& stage, const std::string& digest) override;
  void put(const StageOutput& output) override;

 private:
  std::filesystem::path dir_;
  TrainConfig cfg_;
};

struct DataReference {
  std::string manifest;  // as given by the caller
  std::string manifest_sha256;
};

struct RunResult {
  VariantRun run;
  json_util::json record;
  std::filesystem::path record_path;
};

/// Trains cfg.variant into out_dir, reusing completed stages whose inputs
/// are unchanged, and writes run.json and timings.json.
RunResult run_training(const TrainingSet& data, const TrainConfig& cfg, const DataReference& data_ref,
                       const std::filesystem::path& out_dir);

/// Checks every checkpoint and curve referenced by a run record.
/// Throws io::IntegrityError naming the first failure.
json_util::json verify_run_record(const std::filesystem::path& run_json);

}  // namespace nirm::pipelines
