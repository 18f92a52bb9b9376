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

#include "nirm/synthdata/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

#include "nirm/core/io.hpp"
#include "nirm/core/random.hpp"

namespace nirm::synthdata {

using json_util::ConfigError;
using json_util::json;

namespace {

constexpr int kManifestSchema = 1;
constexpr double kStraightLimit = 1e-9;

std::string env_field(std::size_t i, const char* key) {
  return "environments[" + std::to_string(i) + "]." + key;
}

ManeuverSpec draw_maneuver(Rng& rng, const DatasetConfig& cfg) {
  ManeuverSpec m;
  m.curvature = rng.uniform(-cfg.kappa_max, cfg.kappa_max);
  m.initial_speed = rng.uniform(0.0, cfg.v_max);
  m.target_speed = rng.uniform(0.0, cfg.v_max);
  if (m.target_speed > m.initial_speed) {
    m.accel = cfg.accel_magnitude;
  } else if (m.target_speed < m.initial_speed) {
    m.accel = -cfg.accel_magnitude;
  }
  return m;
}

void embed(const std::vector<double>& matrix, const std::vector<double>& offset, const std::array<double, 2>& code,
           std::vector<double>& out) {
  out.resize(offset.size());
  for (std::size_t k = 0; k < offset.size(); ++k) {
    out[k] = matrix[2 * k] * code[0] + matrix[2 * k + 1] * code[1] + offset[k];
  }
}

std::string file_name(int env, const std::string& split) {
  return "env" + std::to_string(env) + "_" + split + ".bin";
}

std::vector<std::uint8_t> encode_records(const std::vector<Sample>& samples, std::size_t begin, std::size_t end) {
  std::vector<std::uint8_t> bytes;
  for (std::size_t i = begin; i < end; ++i) {
    const Sample& s = samples[i];
    io::append_f64le(bytes, s.observation.invariant_features);
    io::append_f64le(bytes, s.observation.spurious_features);
    const double speed[] = {s.observation.speed};
    io::append_f64le(bytes, speed);
    io::append_f64le(bytes, s.trajectory.flatten());
  }
  return bytes;
}

json file_to_json(const DataFile& f) {
  return json{{"environment_id", f.environment_id},
              {"split", f.split},
              {"path", f.path},
              {"records", f.records},
              {"sha256", f.sha256}};
}

}  // namespace

void ManeuverSpec::validate(double kappa_max, double v_max) const {
  if (!(std::abs(curvature) <= kappa_max)) throw std::invalid_argument("maneuver: |curvature| exceeds kappa_max");
  if (!(initial_speed >= 0.0 && initial_speed <= v_max)) {
    throw std::invalid_argument("maneuver: initial_speed outside [0, v_max]");
  }
  if (!(target_speed >= 0.0 && target_speed <= v_max)) {
    throw std::invalid_argument("maneuver: target_speed outside [0, v_max]");
  }
  if (!std::isfinite(accel)) throw std::invalid_argument("maneuver: accel not finite");
  // The ramp must head toward the target, or the speed would leave the range.
  if ((target_speed > initial_speed && !(accel > 0.0)) || (target_speed < initial_speed && !(accel < 0.0))) {
    throw std::invalid_argument("maneuver: accel does not point toward target_speed");
  }
}

double speed_at(const ManeuverSpec& m, double t) {
  if (m.accel == 0.0) return m.initial_speed;
  const double v = m.initial_speed + m.accel * t;
  return m.accel > 0.0 ? std::min(v, m.target_speed) : std::max(v, m.target_speed);
}

double arc_length(const ManeuverSpec& m, double t) {
  if (m.accel == 0.0) return m.initial_speed * t;
  const double t_switch = (m.target_speed - m.initial_speed) / m.accel;
  if (t <= t_switch) return m.initial_speed * t + 0.5 * m.accel * t * t;
  const double ramp = m.initial_speed * t_switch + 0.5 * m.accel * t_switch * t_switch;
  return ramp + m.target_speed * (t - t_switch);
}

std::array<double, 2> arc_point(double curvature, double s) {
  if (std::abs(curvature) < kStraightLimit) return {s, 0.0};
  const double half = 0.5 * curvature * s;
  // (1 − cos x) written as 2 sin²(x/2) to avoid cancellation near 0.
  const double sh = std::sin(half);
  return {std::sin(curvature * s) / curvature, 2.0 * sh * sh / curvature};
}

models::Trajectory gt_trajectory(const ManeuverSpec& m, double horizon, std::size_t n_points, double kappa_max,
                                 double v_max) {
  m.validate(kappa_max, v_max);
  if (!(horizon > 0.0) || n_points < 1) throw std::invalid_argument("gt_trajectory: bad time grid");
  models::Trajectory traj;
  traj.condition_speed = m.initial_speed;
  for (double t : models::time_grid(horizon, n_points)) {
    const auto p = arc_point(m.curvature, arc_length(m, t));
    traj.points.push_back({p[0], p[1], t});
  }
  return traj;
}

std::string to_string(Role role) { return role == Role::kTrain ? "train" : "test"; }

Role role_from_string(const std::string& s) {
  if (s == "train") return Role::kTrain;
  if (s == "test") return Role::kTest;
  throw std::invalid_argument("role must be \"train\" or \"test\", got \"" + s + "\"");
}

void EnvironmentSpec::validate() const {
  if (!(spurious_correlation >= 0.0 && spurious_correlation <= 1.0)) {
    throw ConfigError("spurious_correlation: must lie in [0, 1]");
  }
  if (!(noise_scale >= 0.0) || !std::isfinite(noise_scale)) throw ConfigError("noise_scale: must be >= 0");
  if (sample_count == 0) throw ConfigError("sample_count: must be > 0");
  if (role == Role::kTest && heldout_count != 0) throw ConfigError("heldout_count: test environments have none");
}

DatasetConfig DatasetConfig::benchmark(std::uint64_t seed) {
  DatasetConfig cfg;
  cfg.seed = seed;
  cfg.environments = {
      {0, 0.9, 2.0, 2000, 500, Role::kTrain},
      {1, 0.8, 2.0, 2000, 500, Role::kTrain},
      {2, 0.1, 2.0, 2000, 0, Role::kTest},
  };
  return cfg;
}

void DatasetConfig::validate() const {
  if (environments.empty()) throw ConfigError("environments: at least one environment is required");
  std::set<int> ids;
  for (std::size_t i = 0; i < environments.size(); ++i) {
    try {
      environments[i].validate();
    } catch (const ConfigError& e) {
      throw ConfigError("environments[" + std::to_string(i) + "]." + e.what());
    }
    if (!ids.insert(environments[i].environment_id).second) {
      throw ConfigError(env_field(i, "environment_id") + ": duplicate id");
    }
  }
  if (invariant_dim == 0) throw ConfigError("invariant_dim: must be > 0");
  if (spurious_dim == 0) throw ConfigError("spurious_dim: must be > 0");
  if (!(horizon > 0.0)) throw ConfigError("horizon: must be > 0");
  if (n_points < 2) throw ConfigError("n_points: must be >= 2");
  if (!(v_max > 0.0)) throw ConfigError("v_max: must be > 0");
  if (!(kappa_max > 0.0)) throw ConfigError("kappa_max: must be > 0");
  if (!(accel_magnitude > 0.0)) throw ConfigError("accel_magnitude: must be > 0");
}

Embedding make_embedding(const DatasetConfig& cfg) {
  Rng rng = Rng::derive(cfg.seed, "synthdata/embedding");
  Embedding e;
  for (std::size_t i = 0; i < 2 * cfg.invariant_dim; ++i) e.invariant_matrix.push_back(rng.normal());
  for (std::size_t i = 0; i < cfg.invariant_dim; ++i) e.invariant_offset.push_back(0.5 * rng.normal());
  for (std::size_t i = 0; i < 2 * cfg.spurious_dim; ++i) e.spurious_matrix.push_back(rng.normal());
  for (std::size_t i = 0; i < cfg.spurious_dim; ++i) e.spurious_offset.push_back(0.5 * rng.normal());
  return e;
}

std::array<double, 2> maneuver_code(const ManeuverSpec& m, const DatasetConfig& cfg) {
  return {m.curvature / cfg.kappa_max, 2.0 * m.target_speed / cfg.v_max - 1.0};
}

std::vector<Sample> generate_environment(const DatasetConfig& cfg, const EnvironmentSpec& env) {
  env.validate();
  const Embedding emb = make_embedding(cfg);
  Rng rng = Rng::derive(cfg.seed, "synthdata/environment", static_cast<std::uint64_t>(env.environment_id));
  const std::size_t total = env.sample_count + env.heldout_count;
  std::vector<Sample> out;
  out.reserve(total);
  for (std::size_t i = 0; i < total; ++i) {
    Sample s;
    s.maneuver = draw_maneuver(rng, cfg);
    // The decoy and the coin are drawn for every sample so that p changes
    // which code the spurious block shows, not the rest of the stream.
    const ManeuverSpec decoy = draw_maneuver(rng, cfg);
    s.spurious_matches = rng.uniform() < env.spurious_correlation;

    Observation& o = s.observation;
    o.environment_id = env.environment_id;
    o.speed = s.maneuver.initial_speed;
    embed(emb.invariant_matrix, emb.invariant_offset, maneuver_code(s.maneuver, cfg), o.invariant_features);
    for (double& x : o.invariant_features) x += env.noise_scale * rng.normal();
    embed(emb.spurious_matrix, emb.spurious_offset, maneuver_code(s.spurious_matches ? s.maneuver : decoy, cfg),
          o.spurious_features);

    s.trajectory = gt_trajectory(s.maneuver, cfg.horizon, cfg.n_points, cfg.kappa_max, cfg.v_max);
    out.push_back(std::move(s));
  }
  return out;
}

json to_json(const DatasetConfig& cfg) {
  json envs = json::array();
  for (const auto& e : cfg.environments) {
    envs.push_back(json{{"environment_id", e.environment_id},
                        {"spurious_correlation", e.spurious_correlation},
                        {"noise_scale", e.noise_scale},
                        {"sample_count", e.sample_count},
                        {"heldout_count", e.heldout_count},
                        {"role", to_string(e.role)}});
  }
  return json{{"seed", cfg.seed},
              {"environments", envs},
              {"invariant_dim", cfg.invariant_dim},
              {"spurious_dim", cfg.spurious_dim},
              {"horizon", cfg.horizon},
              {"n_points", cfg.n_points},
              {"v_max", cfg.v_max},
              {"kappa_max", cfg.kappa_max},
              {"accel_magnitude", cfg.accel_magnitude}};
}

DatasetConfig dataset_config_from_json(const json& j, const std::string& path) {
  json_util::ObjectReader r(j, path);
  DatasetConfig cfg;
  cfg.environments.clear();
  r.optional("seed", cfg.seed);
  r.optional("invariant_dim", cfg.invariant_dim);
  r.optional("spurious_dim", cfg.spurious_dim);
  r.optional("horizon", cfg.horizon);
  r.optional("n_points", cfg.n_points);
  r.optional("v_max", cfg.v_max);
  r.optional("kappa_max", cfg.kappa_max);
  r.optional("accel_magnitude", cfg.accel_magnitude);
  if (const json* envs = r.child("environments")) {
    if (!envs->is_array()) json_util::ObjectReader::fail(r.field("environments"), "expected an array");
    for (std::size_t i = 0; i < envs->size(); ++i) {
      json_util::ObjectReader er((*envs)[i], r.field("environments") + "[" + std::to_string(i) + "]");
      EnvironmentSpec e;
      er.required("environment_id", e.environment_id);
      er.optional("spurious_correlation", e.spurious_correlation);
      er.optional("noise_scale", e.noise_scale);
      er.optional("sample_count", e.sample_count);
      er.optional("heldout_count", e.heldout_count);
      std::string role = to_string(e.role);
      er.optional("role", role);
      try {
        e.role = role_from_string(role);
      } catch (const std::invalid_argument& ex) {
        json_util::ObjectReader::fail(er.field("role"), ex.what());
      }
      er.finish();
      cfg.environments.push_back(e);
    }
  } else {
    cfg.environments = DatasetConfig::benchmark(cfg.seed).environments;
  }
  r.finish();
  try {
    cfg.validate();
  } catch (const ConfigError& e) {
    throw ConfigError((path.empty() ? std::string() : path + ".") + e.what());
  }
  return cfg;
}

DatasetManifest make_dataset(const DatasetConfig& cfg, const std::filesystem::path& out_dir) {
  cfg.validate();
  std::filesystem::create_directories(out_dir);
  DatasetManifest manifest;
  manifest.config = cfg;
  manifest.directory = out_dir;
  for (const auto& env : cfg.environments) {
    const std::vector<Sample> samples = generate_environment(cfg, env);
    auto emit = [&](const std::string& split, std::size_t begin, std::size_t end) {
      const auto bytes = encode_records(samples, begin, end);
      DataFile f;
      f.environment_id = env.environment_id;
      f.split = split;
      f.path = file_name(env.environment_id, split);
      f.records = end - begin;
      f.sha256 = io::sha256_hex(bytes);
      io::write_bytes(out_dir / f.path, bytes);
      manifest.files.push_back(f);
    };
    if (env.role == Role::kTrain) {
      emit("train", 0, env.sample_count);
      if (env.heldout_count > 0) emit("id", env.sample_count, samples.size());
    } else {
      emit("ood", 0, env.sample_count);
    }
  }
  write_manifest(manifest, out_dir / "manifest.json");
  return manifest;
}

void write_manifest(const DatasetManifest& manifest, const std::filesystem::path& manifest_path) {
  json files = json::array();
  for (const auto& f : manifest.files) files.push_back(file_to_json(f));
  json j{{"schema_version", kManifestSchema},
         {"kind", "nirm-dataset"},
         {"record_layout",
          "little-endian float64: invariant_features[" + std::to_string(manifest.config.invariant_dim) +
              "], spurious_features[" + std::to_string(manifest.config.spurious_dim) + "], speed, trajectory[" +
              std::to_string(manifest.config.n_points) + "x(longitudinal, lateral)]"},
         {"config", to_json(manifest.config)},
         {"files", files}};
  io::write_text(manifest_path, j.dump(2) + "\n");
}

DatasetManifest read_manifest(const std::filesystem::path& manifest_path) {
  const std::string source = manifest_path.string();
  const json j = json_util::parse(io::read_text(manifest_path), source);
  json_util::ObjectReader r(j, "");
  int schema = 0;
  std::string kind;
  std::string layout;
  r.required("schema_version", schema);
  r.required("kind", kind);
  r.optional("record_layout", layout);
  if (schema != kManifestSchema) {
    throw io::IntegrityError(source + ": unsupported schema_version " + std::to_string(schema));
  }
  if (kind != "nirm-dataset") throw io::IntegrityError(source + ": not a dataset manifest");
  DatasetManifest m;
  const json* cfg = r.child("config");
  if (cfg == nullptr) throw io::IntegrityError(source + ": missing config");
  m.config = dataset_config_from_json(*cfg, "config");
  const json* files = r.child("files");
  if (files == nullptr || !files->is_array()) throw io::IntegrityError(source + ": missing files");
  for (std::size_t i = 0; i < files->size(); ++i) {
    json_util::ObjectReader fr((*files)[i], "files[" + std::to_string(i) + "]");
    DataFile f;
    fr.required("environment_id", f.environment_id);
    fr.required("split", f.split);
    fr.required("path", f.path);
    fr.required("records", f.records);
    fr.required("sha256", f.sha256);
    fr.finish();
    m.files.push_back(f);
  }
  r.finish();
  m.directory = manifest_path.parent_path();
  return m;
}

namespace {

losses::EnvironmentBatch load_file(const DatasetManifest& m, const DataFile& f) {
  const std::filesystem::path path = m.directory / f.path;
  const auto bytes = io::read_bytes(path);
  const std::size_t stride = m.config.record_values();
  if (bytes.size() != f.records * stride * 8) {
    throw io::IntegrityError(path.string() + ": expected " + std::to_string(f.records * stride * 8) +
                             " bytes, found " + std::to_string(bytes.size()) + " (truncated or padded)");
  }
  if (io::sha256_hex(bytes) != f.sha256) throw io::IntegrityError(path.string() + ": checksum mismatch");

  const auto grid = models::time_grid(m.config.horizon, m.config.n_points);
  losses::EnvironmentBatch batch;
  batch.environment_id = f.environment_id;
  batch.split = f.split;
  for (std::size_t r = 0; r < f.records; ++r) {
    const auto v = io::read_f64le(bytes, r * stride * 8, stride);
    Observation o;
    o.environment_id = f.environment_id;
    auto it = v.begin();
    o.invariant_features.assign(it, it + static_cast<std::ptrdiff_t>(m.config.invariant_dim));
    it += static_cast<std::ptrdiff_t>(m.config.invariant_dim);
    o.spurious_features.assign(it, it + static_cast<std::ptrdiff_t>(m.config.spurious_dim));
    it += static_cast<std::ptrdiff_t>(m.config.spurious_dim);
    o.speed = *it++;
    const std::vector<double> flat(it, v.end());
    batch.truths.push_back(models::Trajectory::from_flat(flat, grid, o.speed));
    batch.observations.push_back(std::move(o));
  }
  return batch;
}

}  // namespace

std::vector<losses::EnvironmentBatch> load_dataset(const std::filesystem::path& manifest_path) {
  const DatasetManifest m = read_manifest(manifest_path);
  std::vector<losses::EnvironmentBatch> out;
  for (const auto& env : m.config.environments) {
    for (const auto& f : m.files) {
      if (f.environment_id == env.environment_id) out.push_back(load_file(m, f));
    }
  }
  return out;
}

std::vector<losses::EnvironmentBatch> load_split(const std::filesystem::path& manifest_path,
                                                 const std::string& split) {
  if (split != "train" && split != "id" && split != "ood") {
    throw std::invalid_argument("split must be train, id or ood, got \"" + split + "\"");
  }
  const DatasetManifest m = read_manifest(manifest_path);
  std::vector<losses::EnvironmentBatch> out;
  for (const auto& f : m.files) {
    if (f.split == split) out.push_back(load_file(m, f));
  }
  return out;
}

void check_compatible(const DatasetConfig& data, const models::ArchitectureConfig& arch) {
  auto mismatch = [](const char* field) {
    throw std::invalid_argument(std::string("architecture/data mismatch: ") + field);
  };
  if (data.invariant_dim != arch.invariant_dim) mismatch("invariant_dim");
  if (data.spurious_dim != arch.spurious_dim) mismatch("spurious_dim");
  if (data.n_points != arch.n_points) mismatch("n_points");
  if (data.horizon != arch.horizon) mismatch("horizon");
  if (data.v_max != arch.v_max) mismatch("v_max");
}

}  // namespace nirm::synthdata
