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

// Average displacement error, evaluation reports and the ablation table.

#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "nirm/core/json_util.hpp"
#include "nirm/losses/batch.hpp"
#include "nirm/models/types.hpp"
#include "nirm/pipelines/config.hpp"
#include "nirm/pipelines/model.hpp"
#include "nirm/pipelines/variants.hpp"

namespace nirm::eval {

inline constexpr int kReportSchemaVersion = 1;

/// Mean Euclidean distance between corresponding grid points (m).
/// Throws std::invalid_argument when the time grids differ.
double ade(const models::Trajectory& predicted, const models::Trajectory& truth);

/// Same on flattened (long, lat) pairs of equal length.
double ade(std::span<const double> predicted_flat, std::span<const double> truth_flat);

struct EnvironmentResult {
  int environment_id = 0;
  std::string split;
  std::size_t samples = 0;
  double ade = 0.0;   // mean over samples, m
  double risk = 0.0;  // mean per-sample risk
  friend bool operator==(const EnvironmentResult&, const EnvironmentResult&) = default;
};

struct EvalReport {
  std::string variant;
  std::uint64_t seed = 0;
  std::string checkpoint;  // file name only
  std::string checkpoint_sha256;
  std::string split;
  double alpha = 5.0;  // lateral weight used for the risk column
  std::vector<EnvironmentResult> environments;
  // Sample-weighted means over environments.
  std::size_t total_samples = 0;
  double ade = 0.0;
  double risk = 0.0;

  json_util::json to_json() const;
  static EvalReport from_json(const json_util::json& j, const std::string& path);
  /// One row per environment plus a final "all" row.
  std::string to_csv() const;
  std::string to_text() const;
  friend bool operator==(const EvalReport&, const EvalReport&) = default;
};

/// Maps a prepared batch to B×2N flattened predictions.
using Predictor = std::function<ad::Tensor<double>(const losses::PreparedBatch&)>;

Predictor model_predictor(const pipelines::TrainedModel& model, const models::ArchitectureConfig& arch);

/// Per-environment ADE and risk; totals are sample-weighted means. Batches
/// with the same environment id are merged in order of appearance.
EvalReport evaluate(const Predictor& predictor, const std::vector<losses::EnvironmentBatch>& batches,
                    const models::ArchitectureConfig& arch, double alpha);

/// Loads and verifies a checkpoint and a dataset split, checks they share
/// an architecture and evaluates. split is "train", "id" or "ood".
EvalReport evaluate_checkpoint(const std::filesystem::path& checkpoint, const std::filesystem::path& manifest,
                               const std::string& split, double alpha = 5.0);

// ---------------------------------------------------------------------------
// Ablation table

/// In-domain and OOD reports of one trained run.
struct RunScores {
  pipelines::Variant variant = pipelines::Variant::kOurs;
  std::uint64_t seed = 0;
  EvalReport in_domain;
  EvalReport ood;
};

struct AblationRow {
  pipelines::Variant variant = pipelines::Variant::kOurs;
  bool present = false;  // false: no run supplied for this variant
  std::vector<std::uint64_t> seeds;
  double id_ade = 0.0;  // mean over seeds
  double id_ade_std = 0.0;
  double ood_ade = 0.0;
  double ood_ade_std = 0.0;
  friend bool operator==(const AblationRow&, const AblationRow&) = default;
};

struct AblationTable {
  std::vector<AblationRow> rows;  // every variant in table order

  const AblationRow& row(pipelines::Variant v) const;
  std::string to_csv() const;
  static AblationTable from_csv(const std::string& text);
  std::string to_text() const;
  friend bool operator==(const AblationTable&, const AblationTable&) = default;
};

/// Seed means and sample standard deviations (0 for a single seed).
AblationTable ablation_table(const std::vector<RunScores>& runs);

}  // namespace nirm::eval
