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

// Synthetic multi-environment driving data with a tunable shortcut.
//
// Every sample is a constant-curvature maneuver. The invariant features are a
// noisy affine embedding of (curvature, target speed); the spurious features
// embed the true maneuver with probability p and an independently drawn decoy
// otherwise, without noise. Training environments use large p, so the
// spurious block is the easier signal there; the test environment inverts
// that.
//
// On disk: one little-endian binary64 file per (environment, split), records
// of [invariant features, spurious features, speed, long_1, lat_1, ...,
// long_N, lat_N], plus manifest.json with a SHA-256 per file.

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "nirm/core/json_util.hpp"
#include "nirm/losses/batch.hpp"
#include "nirm/models/types.hpp"

namespace nirm::synthdata {

struct ManeuverSpec {
  double curvature = 0.0;      // 1/m
  double initial_speed = 0.0;  // m/s
  double target_speed = 0.0;   // m/s
  double accel = 0.0;          // m/s², signed toward target_speed

  /// Throws std::invalid_argument naming the violated bound.
  void validate(double kappa_max, double v_max) const;
};

/// Speed at time t: ramps from v0 toward the target at |accel| and holds.
double speed_at(const ManeuverSpec& m, double t);
/// Distance travelled by time t, the integral of speed_at.
double arc_length(const ManeuverSpec& m, double t);
/// Point on the arc after distance s; the straight-line limit is used for
/// |curvature| < 1e-9.
std::array<double, 2> arc_point(double curvature, double s);

models::Trajectory gt_trajectory(const ManeuverSpec& m, double horizon, std::size_t n_points,
                                 double kappa_max = 0.2, double v_max = 10.0);

enum class Role { kTrain, kTest };

struct EnvironmentSpec {
  int environment_id = 0;
  double spurious_correlation = 0.9;  // p
  double noise_scale = 2.0;           // σ on the invariant features
  std::size_t sample_count = 2000;
  /// Additional in-domain held-out samples (training environments only).
  std::size_t heldout_count = 0;
  Role role = Role::kTrain;

  void validate() const;
  friend bool operator==(const EnvironmentSpec&, const EnvironmentSpec&) = default;
};

struct DatasetConfig {
  std::uint64_t seed = 0;
  std::vector<EnvironmentSpec> environments;
  std::size_t invariant_dim = 8;
  std::size_t spurious_dim = 8;
  double horizon = 3.0;
  std::size_t n_points = 16;
  double v_max = 10.0;
  double kappa_max = 0.2;
  double accel_magnitude = 2.0;

  /// Two training environments (p = 0.9, 0.8) with held-out splits and one
  /// test environment (p = 0.1).
  static DatasetConfig benchmark(std::uint64_t seed = 0);

  void validate() const;
  std::size_t record_values() const { return invariant_dim + spurious_dim + 1 + 2 * n_points; }
  friend bool operator==(const DatasetConfig&, const DatasetConfig&) = default;
};

/// Split names: "train" and "id" (held-out) for training environments,
/// "ood" for test environments.
struct DataFile {
  int environment_id = 0;
  std::string split;
  std::string path;  // relative to the manifest
  std::size_t records = 0;
  std::string sha256;
};

struct DatasetManifest {
  DatasetConfig config;
  std::vector<DataFile> files;
  std::filesystem::path directory;  // where the manifest lives; not serialized
};

std::string to_string(Role role);
Role role_from_string(const std::string& s);

/// Affine maps from the normalized maneuver code to feature space. Drawn
/// from the dataset seed only, so shared by every environment.
struct Embedding {
  std::vector<double> invariant_matrix;  // invariant_dim × 2, row-major
  std::vector<double> invariant_offset;
  std::vector<double> spurious_matrix;  // spurious_dim × 2
  std::vector<double> spurious_offset;
};
Embedding make_embedding(const DatasetConfig& cfg);

/// The normalized maneuver code (κ/κ_max, 2·target/v_max − 1).
std::array<double, 2> maneuver_code(const ManeuverSpec& m, const DatasetConfig& cfg);

struct Sample {
  Observation observation;
  models::Trajectory trajectory;
  ManeuverSpec maneuver;
  bool spurious_matches = true;
};

/// Draws the samples of one environment: sample_count training (or test)
/// samples followed by heldout_count held-out samples.
std::vector<Sample> generate_environment(const DatasetConfig& cfg, const EnvironmentSpec& env);

/// Writes data files and manifest.json into out_dir (created if missing).
DatasetManifest make_dataset(const DatasetConfig& cfg, const std::filesystem::path& out_dir);

DatasetManifest read_manifest(const std::filesystem::path& manifest_path);
void write_manifest(const DatasetManifest& manifest, const std::filesystem::path& manifest_path);

/// Batches of every file, grouped by environment id, in manifest order.
/// Verifies sizes and checksums; failures raise io::IntegrityError naming
/// the file.
std::vector<losses::EnvironmentBatch> load_dataset(const std::filesystem::path& manifest_path);
/// Only the batches of one split ("train", "id" or "ood").
std::vector<losses::EnvironmentBatch> load_split(const std::filesystem::path& manifest_path,
                                                 const std::string& split);

json_util::json to_json(const DatasetConfig& cfg);
/// Strict parse; unknown keys and out-of-range values raise ConfigError
/// naming the field under the given path.
DatasetConfig dataset_config_from_json(const json_util::json& j, const std::string& path);

/// ArchitectureConfig fields that must agree with the data.
void check_compatible(const DatasetConfig& data, const models::ArchitectureConfig& arch);

}  // namespace nirm::synthdata
