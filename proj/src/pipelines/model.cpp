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

#include "nirm/pipelines/model.hpp"

#include <stdexcept>

#include "nirm/core/random.hpp"
#include "nirm/models/models.hpp"

namespace nirm::pipelines {

namespace {

const char* output_prefix(ModelKind kind) { return kind == ModelKind::kLatentDecoder ? "decoder." : "head."; }

}  // namespace

ad::ParameterSet TrainedModel::merged() const {
  return encoder.with_prefix("encoder.").merged(output.with_prefix(output_prefix(kind)));
}

TrainedModel TrainedModel::from_merged(const ad::ParameterSet& params, const models::ArchitectureConfig& arch) {
  TrainedModel m;
  m.encoder = params.with_prefix_removed("encoder.");
  ad::ParameterSet decoder = params.with_prefix_removed("decoder.");
  ad::ParameterSet head = params.with_prefix_removed("head.");
  if (decoder.empty() == head.empty()) {
    throw std::invalid_argument("model: expected exactly one of decoder.* or head.* parameters");
  }
  if (m.encoder.size() + decoder.size() + head.size() != params.size()) {
    throw std::invalid_argument("model: parameters outside encoder/decoder/head");
  }
  models::check_encoder(m.encoder, arch);
  if (!decoder.empty()) {
    m.kind = ModelKind::kLatentDecoder;
    models::check_decoder(decoder, arch);
    m.output = std::move(decoder);
  } else {
    m.kind = ModelKind::kPointHead;
    models::check_mlp_layout(head, arch.latent_dim, {}, 2 * arch.n_points, "head");
    m.output = std::move(head);
  }
  return m;
}

ad::ParameterSet init_point_head(const models::ArchitectureConfig& arch, std::uint64_t seed) {
  Rng rng = Rng::derive(seed, "init/head");
  return models::init_mlp(arch.latent_dim, {}, 2 * arch.n_points, rng);
}

ad::Tensor<double> predict(const TrainedModel& model, const ad::Tensor<double>& observations,
                           std::span<const double> speeds, const models::ArchitectureConfig& arch) {
  if (observations.rows() != speeds.size()) throw std::invalid_argument("predict: observation rows must match speeds");
  ad::Tape<double> tape;
  ad::Bound<double> enc = ad::bind_constant(tape, model.encoder);
  ad::Bound<double> out = ad::bind_constant(tape, model.output);
  ad::Var<double> obs = tape.constant(observations);
  if (model.kind == ModelKind::kPointHead) return point_head_outputs(enc, out, obs, arch).value();
  ad::Var<double> z = models::encoder_latents(enc, obs);
  return models::decoder_trajectories(tape, out, z, speeds, arch).value();
}

}  // namespace nirm::pipelines
