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

#include "nirm/pipelines/run.hpp"

#include <chrono>

#include "nirm/core/io.hpp"
#include "nirm/models/checkpoint.hpp"

namespace nirm::pipelines {

namespace fs = std::filesystem;
using json_util::json;
using json_util::ObjectReader;

namespace {

fs::path index_path(const fs::path& dir, const std::string& stage) { return dir / "stages" / (stage + ".json"); }

std::string curve_name(const std::string& stage) { return "curves/" + stage + ".csv"; }

json read_json(const fs::path& path) {
  try {
    return json_util::parse(io::read_text(path), path.string());
  } catch (const json_util::ConfigError& e) {
    throw io::IntegrityError(e.what());
  }
}

}  // namespace

DirectoryStageStore::DirectoryStageStore(fs::path dir, const TrainConfig& cfg) : dir_(std::move(dir)), cfg_(cfg) {}

std::optional<StageOutput> DirectoryStageStore::find(const std::string& stage, const std::string& digest) {
  const fs::path index_file = index_path(dir_, stage);
  if (!fs::exists(index_file)) return std::nullopt;
  const json index = read_json(index_file);
  if (index.value("digest", std::string()) != digest) return std::nullopt;

  StageOutput out;
  out.name = stage;
  out.digest = digest;
  out.summary = index.at("summary");
  for (const auto& [stem, ref] : index.at("checkpoints").items()) {
    const fs::path manifest = dir_ / ref.at("path").get<std::string>();
    if (!fs::exists(manifest)) return std::nullopt;  // partially written stage: recompute
    if (io::sha256_file(manifest) != ref.at("sha256").get<std::string>()) {
      throw io::IntegrityError(manifest.string() + ": manifest differs from the stage index");
    }
    models::Checkpoint ck = models::load_checkpoint(manifest);
    if (ck.metadata.value("stage_digest", std::string()) != digest) {
      throw io::IntegrityError(manifest.string() + ": checkpoint belongs to a different stage run");
    }
    out.artifacts[stem] = std::move(ck.params);
  }
  const fs::path curve = dir_ / index.at("curve").get<std::string>();
  if (io::sha256_file(curve) != index.at("curve_sha256").get<std::string>()) {
    throw io::IntegrityError(curve.string() + ": loss curve differs from the stage index");
  }
  out.curve = LossCurve::from_csv(io::read_text(curve));
  return out;
}

void DirectoryStageStore::put(const StageOutput& output) {
  json checkpoints = json::object();
  for (const auto& [stem, params] : output.artifacts) {
    models::Checkpoint ck;
    ck.role = stem;
    ck.variant = to_string(cfg_.variant);
    ck.seed = cfg_.seed;
    ck.arch = cfg_.arch;
    ck.params = params;
    ck.metadata = json{{"stage", output.name}, {"stage_digest", output.digest}};
    if (stem == "model") {
      ck.metadata["model_kind"] = params.with_prefix_removed("decoder.").empty() ? "point_head" : "latent_decoder";
    }
    const std::string file = stem + ".json";
    const std::string sha = models::save_checkpoint(dir_ / file, ck);
    checkpoints[stem] = json{{"path", file}, {"sha256", sha}};
  }
  const std::string curve_text = output.curve.to_csv();
  io::write_text(dir_ / curve_name(output.name), curve_text);
  const json index{{"stage", output.name},
                   {"digest", output.digest},
                   {"checkpoints", checkpoints},
                   {"curve", curve_name(output.name)},
                   {"curve_sha256", io::sha256_hex(curve_text)},
                   {"summary", output.summary}};
  io::write_text(index_path(dir_, output.name), index.dump(2) + "\n");
}

RunResult run_training(const TrainingSet& data, const TrainConfig& cfg, const DataReference& data_ref,
                       const fs::path& out_dir) {
  fs::create_directories(out_dir);
  DirectoryStageStore store(out_dir, cfg);
  const auto start = std::chrono::steady_clock::now();
  RunResult result;
  result.run = train_variant(data, cfg, &store);
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  json stages = json::array();
  json reused = json::array();
  for (std::size_t i = 0; i < result.run.stages.size(); ++i) {
    const StageOutput& s = result.run.stages[i];
    // The index written by the store holds the hashes; reuse it verbatim.
    stages.push_back(read_json(index_path(out_dir, s.name)));
    if (result.run.reused[i]) reused.push_back(s.name);
  }
  const VariantFlags flags = variant_flags(cfg.variant);
  const json& final_stage = stages.back();
  result.record = json{{"schema_version", kRunSchemaVersion},
                       {"kind", "nirm-run"},
                       {"variant", to_string(cfg.variant)},
                       {"seed", cfg.seed},
                       {"flags", json{{"decoder_fixed", flags.decoder_fixed},
                                      {"decoder_pretrained", flags.decoder_pretrained},
                                      {"irm", flags.irm}}},
                       {"config", to_json(cfg)},
                       {"data", json{{"manifest", data_ref.manifest},
                                     {"manifest_sha256", data_ref.manifest_sha256},
                                     {"training_digest", data.digest}}},
                       {"stages", stages},
                       {"model", final_stage.at("checkpoints").at("model")}};
  result.record_path = out_dir / "run.json";
  io::write_text(result.record_path, result.record.dump(2) + "\n");
  io::write_text(out_dir / "timings.json",
                 json{{"total_seconds", seconds}, {"reused_stages", reused}}.dump(2) + "\n");
  return result;
}

json verify_run_record(const fs::path& run_json) {
  const json record = read_json(run_json);
  const int version = record.value("schema_version", 0);
  if (version != kRunSchemaVersion) {
    throw io::IntegrityError(run_json.string() + ": schema_version " + std::to_string(version) + " is not supported");
  }
  const fs::path dir = run_json.parent_path();
  for (const auto& stage : record.at("stages")) {
    for (const auto& [stem, ref] : stage.at("checkpoints").items()) {
      const fs::path manifest = dir / ref.at("path").get<std::string>();
      if (!fs::exists(manifest)) throw io::IntegrityError(manifest.string() + ": referenced checkpoint is missing");
      if (io::sha256_file(manifest) != ref.at("sha256").get<std::string>()) {
        throw io::IntegrityError(manifest.string() + ": checkpoint manifest does not match the run record");
      }
      models::load_checkpoint(manifest);
    }
    const fs::path curve = dir / stage.at("curve").get<std::string>();
    if (!fs::exists(curve) || io::sha256_file(curve) != stage.at("curve_sha256").get<std::string>()) {
      throw io::IntegrityError(curve.string() + ": loss curve is missing or does not match the run record");
    }
  }
  return record;
}

}  // namespace nirm::pipelines
