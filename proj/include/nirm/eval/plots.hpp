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

// Standalone SVG figures. Output is a pure function of the inputs, with
// numbers printed at fixed precision, so figures are byte-reproducible.

#include <string>
#include <vector>

#include "nirm/eval/eval.hpp"

namespace nirm::eval {

struct OverlaySample {
  std::string label;
  std::vector<double> truth_flat;  // (long, lat) pairs
  std::vector<double> predicted_flat;
};

/// Picks rows of one batch and pairs the truth with the predictor output.
std::vector<OverlaySample> overlay_samples(const Predictor& predictor, const losses::EnvironmentBatch& batch,
                                           const std::vector<std::size_t>& rows,
                                           const models::ArchitectureConfig& arch);

/// One panel per sample: truth and prediction in the vehicle frame.
std::string trajectory_overlay_svg(const std::vector<OverlaySample>& samples, const std::string& title);

/// In-domain and OOD ADE bars per variant; absent variants are labelled.
std::string ablation_bar_chart_svg(const AblationTable& table);

}  // namespace nirm::eval
