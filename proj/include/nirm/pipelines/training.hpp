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

// Training stages. Each takes prepared training environments and a config
// and returns new parameters plus a loss curve; none touches the disk.

#include <stdexcept>
#include <string>
#include <vector>

#include "nirm/ad/parameter_set.hpp"
#include "nirm/losses/batch.hpp"
#include "nirm/pipelines/config.hpp"
#include "nirm/pipelines/optim.hpp"

namespace nirm::pipelines {

/// First non-finite loss; the message names the stage and step.
class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A stage was asked to run without the artifact it depends on.
class StageOrderError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct LossCurve {
  std::vector<std::string> columns;  // excluding the leading "step"
  std::vector<std::size_t> steps;
  std::vector<std::vector<double>> values;

  void add(std::size_t step, std::vector<double> row);
  std::size_t size() const { return steps.size(); }
  /// Header "step,<columns>", shortest round-trip number formatting.
  std::string to_csv() const;
  static LossCurve from_csv(const std::string& text);
  friend bool operator==(const LossCurve&, const LossCurve&) = default;
};

/// Training environments prepared once, with a content digest.
struct TrainingSet {
  std::vector<losses::PreparedBatch> environments;
  std::string digest;

  static TrainingSet from(const std::vector<losses::EnvironmentBatch>& batches, const models::ArchitectureConfig& arch);
  std::size_t sample_count() const;
};

/// The batches tagged "train".
std::vector<losses::EnvironmentBatch> training_split(const std::vector<losses::EnvironmentBatch>& all);

/// Concatenates rows of several batches; the environment id becomes -1.
losses::PreparedBatch pool(const std::vector<losses::PreparedBatch>& batches);

/// Per-step environment terms: one minibatch per labelled environment, or
/// in minibatch mode as many pooled minibatches, each its own term.
class TermSampler {
 public:
  struct Term {
    std::size_t source;
    std::vector<std::size_t> rows;
  };
  /// sizes are the source row counts; stage names the random stream.
  TermSampler(const std::vector<std::size_t>& sizes, std::size_t terms_per_source, std::size_t batch_size,
              std::uint64_t seed, const std::string& stage);
  std::vector<Term> next();

 private:
  std::vector<EpochSampler> samplers_;
  std::size_t terms_per_source_;
  std::size_t batch_size_;
};

/// Term sources for cfg.environment_mode: the environments, or their pool.
struct TermSources {
  std::vector<losses::PreparedBatch> sources;
  std::size_t terms_per_source = 1;
};
TermSources term_sources(const TrainingSet& data, EnvironmentMode mode);

// ---------------------------------------------------------------------------
// Stage 1: adversarial decoder pretraining.

struct GanResult {
  ad::ParameterSet decoder;
  ad::ParameterSet critic;
  LossCurve curve;  // critic_loss, wasserstein, gradient_penalty, generator_loss
};

GanResult train_decoder_gan(const TrainingSet& data, const TrainConfig& cfg);

/// Decodes B latent rows at the given speeds: B×2N.
ad::Tensor<double> decode_batch(const ad::ParameterSet& w, const ad::Tensor<double>& z, std::span<const double> speeds,
                                const models::ArchitectureConfig& arch);

// ---------------------------------------------------------------------------
// Stage 2: latent inference and encoder regression.

struct LatentEntry {
  int environment_id = 0;
  std::size_t row = 0;  // within its environment
  std::vector<double> z;
  double initial_objective = 0.0;
  double objective = 0.0;  // at z, the best iterate
  bool finite = true;      // false: flagged and excluded
};

struct LatentTable {
  std::vector<LatentEntry> entries;
  std::size_t retained() const;
  /// Flattened into checkpointable tensors and back.
  ad::ParameterSet to_parameters(std::size_t latent_dim) const;
  static LatentTable from_parameters(const ad::ParameterSet& p);
};

/// Adam from z = 0 (or initial), keeping the best-objective iterate.
LatentEntry infer_latent(const ad::ParameterSet& w0, std::span<const double> truth_flat, double speed,
                         const TrainConfig& cfg, const std::vector<double>& initial = {});

/// The first latent_samples_per_env rows of every environment (all if 0).
LatentTable infer_latents(const ad::ParameterSet& w0, const TrainingSet& data, const TrainConfig& cfg);

struct EncoderResult {
  ad::ParameterSet encoder;
  LossCurve curve;
  double final_mse = 0.0;  // over every retained sample
};

/// Regresses encode(θ, obs) onto ẑ by mean squared error from a fresh encoder.
EncoderResult pretrain_encoder(const LatentTable& latents, const TrainingSet& data, const TrainConfig& cfg);

// ---------------------------------------------------------------------------
// Stage 3 and the baselines.

struct FinetuneResult {
  ad::ParameterSet encoder;
  LossCurve curve;  // objective, risk, penalty (sums over terms)
};

/// Σ_e R^e + λ P^e over θ only, decoder frozen (asserted byte-identical).
FinetuneResult finetune_encoder_nirm(const ad::ParameterSet& theta0, const ad::ParameterSet& w0,
                                     const TrainingSet& data, const TrainConfig& cfg);

struct JointResult {
  ad::ParameterSet encoder;
  ad::ParameterSet decoder;
  LossCurve curve;
};

/// Encoder and decoder trained together from fresh initialisations on
/// Σ_e R^e + λ P^e; λ = 0 is plain risk minimisation.
JointResult train_joint(const TrainingSet& data, const TrainConfig& cfg, double lambda);

struct PointHeadResult {
  ad::ParameterSet encoder;
  ad::ParameterSet head;
  LossCurve curve;
};

/// Encoder plus linear head to the grid points with the IRMv1 penalty.
PointHeadResult train_traj_irm(const TrainingSet& data, const TrainConfig& cfg);

/// Latent regression from θ0 onto ẑ with the IRMv1 penalty per environment.
EncoderResult train_latent_irmv1(const ad::ParameterSet& theta0, const LatentTable& latents, const TrainingSet& data,
                                 const TrainConfig& cfg);

/// λ in effect at a 1-based step, honouring the warm-up fraction.
double lambda_at(const TrainConfig& cfg, std::size_t step, std::size_t total_steps);

}  // namespace nirm::pipelines
