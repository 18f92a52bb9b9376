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

#include "nirm/models/checkpoint.hpp"

#include <stdexcept>
#include <vector>

namespace nirm::models {

using json_util::ConfigError;
using json_util::json;
using json_util::ObjectReader;

json to_json(const ArchitectureConfig& a) {
  return json{{"latent_dim", a.latent_dim},         {"decoder_hidden", a.decoder_hidden},
              {"encoder_hidden", a.encoder_hidden}, {"critic_hidden", a.critic_hidden},
              {"horizon", a.horizon},               {"n_points", a.n_points},
              {"v_max", a.v_max},                   {"invariant_dim", a.invariant_dim},
              {"spurious_dim", a.spurious_dim}};
}

ArchitectureConfig architecture_from_json(const json& j, const std::string& path) {
  ObjectReader r(j, path);
  ArchitectureConfig a;
  r.optional("latent_dim", a.latent_dim);
  r.optional("decoder_hidden", a.decoder_hidden);
  r.optional("encoder_hidden", a.encoder_hidden);
  r.optional("critic_hidden", a.critic_hidden);
  r.optional("horizon", a.horizon);
  r.optional("n_points", a.n_points);
  r.optional("v_max", a.v_max);
  r.optional("invariant_dim", a.invariant_dim);
  r.optional("spurious_dim", a.spurious_dim);
  r.finish();
  try {
    a.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError((path.empty() ? std::string() : path + ".") + e.what());
  }
  return a;
}

std::string parameter_digest(const ad::ParameterSet& params) {
  std::vector<std::uint8_t> bytes;
  bytes.reserve(8 * params.parameter_count());
  for (const auto& e : params.entries()) io::append_f64le(bytes, e.tensor.data());
  return io::sha256_hex(bytes);
}

std::string save_checkpoint(const std::filesystem::path& manifest_path, const Checkpoint& ck) {
  std::filesystem::path blob_path = manifest_path;
  blob_path.replace_extension(".bin");
  std::vector<std::uint8_t> blob;
  json tensors = json::array();
  for (const auto& e : ck.params.entries()) {
    const std::size_t offset = blob.size();
    std::vector<std::uint8_t> bytes;
    io::append_f64le(bytes, e.tensor.data());
    tensors.push_back(json{{"name", e.name},
                           {"shape", e.tensor.shape()},
                           {"offset", offset},
                           {"sha256", io::sha256_hex(bytes)}});
    blob.insert(blob.end(), bytes.begin(), bytes.end());
  }
  json manifest{{"schema_version", kCheckpointSchemaVersion},
                {"kind", "nirm-checkpoint"},
                {"role", ck.role},
                {"variant", ck.variant},
                {"seed", ck.seed},
                {"architecture", to_json(ck.arch)},
                {"blob", blob_path.filename().string()},
                {"blob_bytes", blob.size()},
                {"blob_sha256", io::sha256_hex(blob)},
                {"tensors", tensors},
                {"metadata", ck.metadata}};
  io::write_bytes(blob_path, blob);
  const std::string text = manifest.dump(2) + "\n";
  io::write_text(manifest_path, text);
  return io::sha256_hex(text);
}

Checkpoint load_checkpoint(const std::filesystem::path& manifest_path) {
  const std::string where = manifest_path.string();
  json manifest;
  try {
    manifest = json_util::parse(io::read_text(manifest_path), where);
  } catch (const ConfigError& e) {
    throw io::IntegrityError(e.what());
  }
  Checkpoint ck;
  try {
    ObjectReader r(manifest, "");
    int version = 0;
    r.required("schema_version", version);
    if (version != kCheckpointSchemaVersion) {
      throw io::IntegrityError(where + ": schema_version " + std::to_string(version) + " is not supported (expected " +
                               std::to_string(kCheckpointSchemaVersion) + ")");
    }
    std::string kind;
    r.required("kind", kind);
    if (kind != "nirm-checkpoint") throw io::IntegrityError(where + ": not a checkpoint manifest (kind " + kind + ")");
    r.required("role", ck.role);
    r.required("variant", ck.variant);
    r.required("seed", ck.seed);
    const json* arch = r.child("architecture");
    if (arch == nullptr) ObjectReader::fail("architecture", "required");
    ck.arch = architecture_from_json(*arch, "architecture");
    std::string blob_name, blob_sha;
    std::size_t blob_bytes = 0;
    r.required("blob", blob_name);
    r.required("blob_bytes", blob_bytes);
    r.required("blob_sha256", blob_sha);
    const json* tensors = r.child("tensors");
    if (tensors == nullptr || !tensors->is_array()) ObjectReader::fail("tensors", "expected an array");
    if (const json* meta = r.child("metadata")) ck.metadata = *meta;
    r.finish();

    const std::filesystem::path blob_path = manifest_path.parent_path() / blob_name;
    const std::vector<std::uint8_t> blob = io::read_bytes(blob_path);
    if (blob.size() != blob_bytes) {
      throw io::IntegrityError(blob_path.string() + ": " + std::to_string(blob.size()) + " bytes, manifest says " +
                               std::to_string(blob_bytes) + " (truncated or padded)");
    }
    std::size_t expected_offset = 0;
    for (std::size_t i = 0; i < tensors->size(); ++i) {
      const std::string field = "tensors[" + std::to_string(i) + "]";
      ObjectReader t((*tensors)[i], field);
      std::string name, sha;
      ad::Shape shape;
      std::size_t offset = 0;
      t.required("name", name);
      t.required("shape", shape);
      t.required("offset", offset);
      t.required("sha256", sha);
      t.finish();
      const std::size_t count = ad::shape_size(shape);
      if (offset != expected_offset || offset + 8 * count > blob.size()) {
        throw io::IntegrityError(where + ": tensor '" + name + "' has an inconsistent offset");
      }
      const std::span<const std::uint8_t> bytes(blob.data() + offset, 8 * count);
      if (io::sha256_hex(bytes) != sha) {
        throw io::IntegrityError(blob_path.string() + ": checksum mismatch in tensor '" + name + "'");
      }
      ck.params.add(name, ad::Tensor<double>(shape, io::read_f64le(blob, offset, count)));
      expected_offset = offset + 8 * count;
    }
    if (expected_offset != blob.size()) throw io::IntegrityError(blob_path.string() + ": trailing bytes after tensors");
    if (io::sha256_hex(blob) != blob_sha) throw io::IntegrityError(blob_path.string() + ": blob checksum mismatch");
  } catch (const ConfigError& e) {
    throw io::IntegrityError(where + ": " + e.what());
  } catch (const ad::ShapeError& e) {
    throw io::IntegrityError(where + ": " + e.what());
  }
  return ck;
}

}  // namespace nirm::models
