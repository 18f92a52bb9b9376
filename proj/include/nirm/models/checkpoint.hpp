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

// Checkpoints are a JSON manifest next to a blob of little-endian doubles.
// The manifest lists every tensor with its shape, byte offset and SHA-256,
// so a corrupted byte is reported against the tensor that holds it.

#include <cstdint>
#include <filesystem>
#include <string>

#include "nirm/ad/parameter_set.hpp"
#include "nirm/core/io.hpp"
#include "nirm/core/json_util.hpp"
#include "nirm/models/types.hpp"

namespace nirm::models {

inline constexpr int kCheckpointSchemaVersion = 1;

json_util::json to_json(const ArchitectureConfig& arch);
/// Missing fields keep their defaults; unknown keys are rejected.
ArchitectureConfig architecture_from_json(const json_util::json& j, const std::string& path);

struct Checkpoint {
  std::string role;     // e.g. "decoder", "critic", "encoder", "model"
  std::string variant;  // creating variant tag
  std::uint64_t seed = 0;
  ArchitectureConfig arch;
  ad::ParameterSet params;
  json_util::json metadata = json_util::json::object();
};

/// Writes <stem>.json and <stem>.bin; returns the manifest's SHA-256.
std::string save_checkpoint(const std::filesystem::path& manifest_path, const Checkpoint& checkpoint);

/// Verifies schema version, blob size and every tensor checksum.
/// Throws io::IntegrityError naming the file and, for data corruption, the tensor.
Checkpoint load_checkpoint(const std::filesystem::path& manifest_path);

/// SHA-256 over the little-endian bytes of every value, in entry order.
std::string parameter_digest(const ad::ParameterSet& params);

}  // namespace nirm::models
