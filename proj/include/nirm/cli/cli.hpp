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

// The `nirm` command line: synth-data, train, eval and report.
//
// Exit status: 0 when every requested artifact was written and verified,
// 1 for failures while working (integrity, missing stage artifacts,
// divergence), 2 for invalid configuration or usage.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>

#include "nirm/core/json_util.hpp"
#include "nirm/pipelines/config.hpp"
#include "nirm/synthdata/dataset.hpp"

namespace nirm::cli {

inline constexpr int kExperimentSchemaVersion = 1;
/// Output root used when --out is absent.
inline constexpr const char* kOutputRootVariable = "NIRM_OUTPUT_ROOT";

/// One experiment file. The top-level seed drives both the dataset and the
/// training run; a nested seed, if given, must agree with it.
struct ExperimentConfig {
  std::uint64_t seed = 0;
  synthdata::DatasetConfig dataset = synthdata::DatasetConfig::benchmark(0);
  pipelines::TrainConfig train;
  std::string manifest;    // dataset manifest; relative paths are resolved against the file
  std::string output_dir;  // same

  json_util::json to_json() const;
  /// Strict: unknown keys and unsupported schema versions raise ConfigError.
  static ExperimentConfig from_json(const json_util::json& j, const std::filesystem::path& base_dir);
  /// Sets the seed everywhere it is used.
  void set_seed(std::uint64_t s);
};

ExperimentConfig load_experiment(const std::filesystem::path& path);

/// Runs one command. argv[0] is the program name.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace nirm::cli
