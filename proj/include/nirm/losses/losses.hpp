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

// Training objectives.
//
// Conventions:
//  * risk(pred, truth) of one trajectory sums squared point errors with the
//    lateral component weighted by alpha.
//  * The risk of a batch R^e is the mean per-sample risk.
//  * The NIRM penalty of a batch is ||∇_w R^e||² at the current decoder w.
//  * nirm_objective sums R^e + λ·P^e over batches, so with λ = 0 it equals
//    Σ_e R^e, which is (number of batches)·erm_objective when the batches
//    have equal size.

#include <cstddef>
#include <span>
#include <vector>

#include "nirm/ad/engine.hpp"
#include "nirm/losses/batch.hpp"
#include "nirm/models/networks.hpp"

namespace nirm::losses {

struct RiskConfig {
  double alpha = 5.0;       // lateral weight
  double lambda_irm = 1.0;  // penalty weight λ
  double lambda_z = 1e-3;   // latent norm weight λ₂

  void validate() const;
  friend bool operator==(const RiskConfig&, const RiskConfig&) = default;
};

/// Per-column weights (1, α, 1, α, ...) for flattened trajectories.
ad::Tensor<double> risk_weights(std::size_t rows, std::size_t n_points, double alpha);

/// Mean over rows of Σ_j c_j (pred − truth)²_j.
template <ad::Scalar T>
ad::Var<T> mean_weighted_squared_error(ad::Tape<T>& tape, ad::Var<T> pred, const ad::Tensor<double>& truth,
                                       const ad::Tensor<double>& weights) {
  ad::Var<T> residual = pred - tape.constant(truth);
  ad::Var<T> weighted = ad::square(residual) * tape.constant(weights);
  return ad::scale(ad::sum(weighted), 1.0 / static_cast<double>(truth.rows()));
}

/// Batch risk of decoder w applied to latents z (a B×d_z variable).
template <ad::Scalar T>
ad::Var<T> decoded_batch_risk(ad::Tape<T>& tape, const ad::Bound<T>& w, ad::Var<T> z, const PreparedBatch& batch,
                              double alpha, const models::ArchitectureConfig& arch) {
  ad::Var<T> pred = models::decoder_trajectories(tape, w, z, batch.speeds, arch);
  return mean_weighted_squared_error(tape, pred, batch.truths,
                                     risk_weights(batch.size(), arch.n_points, alpha));
}

/// Batch risk of the encoder-decoder pipeline.
template <ad::Scalar T>
ad::Var<T> pipeline_batch_risk(ad::Tape<T>& tape, const ad::Bound<T>& w, const ad::Bound<T>& theta,
                               const PreparedBatch& batch, double alpha, const models::ArchitectureConfig& arch) {
  ad::Var<T> z = models::encoder_latents(theta, tape.constant(batch.observations));
  return decoded_batch_risk(tape, w, z, batch, alpha, arch);
}

// ---------------------------------------------------------------------------
// Value-level objectives.

/// Risk of one trajectory pair; rejects mismatched time grids.
double risk(const models::Trajectory& predicted, const models::Trajectory& truth, const RiskConfig& cfg);

double batch_risk(const ad::ParameterSet& theta, const ad::ParameterSet& w, const PreparedBatch& batch,
                  const RiskConfig& cfg, const models::ArchitectureConfig& arch);

/// Mean risk over every sample of every batch.
double erm_objective(const ad::ParameterSet& theta, const ad::ParameterSet& w,
                     std::span<const PreparedBatch> batches, const RiskConfig& cfg,
                     const models::ArchitectureConfig& arch);

double nirm_penalty(const ad::ParameterSet& theta, const ad::ParameterSet& w0, const PreparedBatch& batch,
                    const RiskConfig& cfg, const models::ArchitectureConfig& arch);

double nirm_objective(const ad::ParameterSet& theta, const ad::ParameterSet& w0,
                      std::span<const PreparedBatch> batches, const RiskConfig& cfg,
                      const models::ArchitectureConfig& arch);

/// Risk-only counterpart of nirm_objective: Σ_e R^e.
double risk_sum_objective(const ad::ParameterSet& theta, const ad::ParameterSet& w,
                          std::span<const PreparedBatch> batches, const RiskConfig& cfg,
                          const models::ArchitectureConfig& arch);

// ---------------------------------------------------------------------------
// Objectives with gradients, as consumed by the training loops.

struct ObjectiveTerms {
  double objective = 0.0;
  double risk = 0.0;
  double penalty = 0.0;
  ad::ParameterSet grad_theta;
  ad::ParameterSet grad_w;  // empty unless requested
};

/// R^e + λ·||∇_w R^e||² for one batch and its gradients. When λ = 0 the
/// second-order pass is skipped and the gradients are those of R^e alone,
/// so λ = 0 training is step-identical to risk-only training.
ObjectiveTerms nirm_terms(const ad::ParameterSet& theta, const ad::ParameterSet& w, const PreparedBatch& batch,
                          double alpha, double lambda, const models::ArchitectureConfig& arch, bool want_grad_w);

/// IRMv1 with a scalar dummy multiplier g on the model output φ:
/// R(g) = mean_b Σ_j c_j (g·φ_bj − y_bj)², penalty (dR/dg)² at g = 1.
struct IrmTerms {
  double objective = 0.0;
  double risk = 0.0;
  double penalty = 0.0;
  ad::ParameterSet gradient;
};

/// model(tape, params) must return B×K outputs matching targets.
template <class Model>
IrmTerms irmv1_terms(const Model& model, const ad::ParameterSet& params, const ad::Tensor<double>& targets,
                     const ad::Tensor<double>& weights, double lambda) {
  ad::ParameterSet dummy;
  dummy.add("g", ad::Tensor<double>::scalar(1.0));
  auto program = [&](auto& tape, const auto& g, const auto& p) {
    return mean_weighted_squared_error(tape, ad::mul_scalar(model(tape, p), g["g"]), targets, weights);
  };
  IrmTerms out;
  if (lambda == 0.0) {
    ad::PairGradient first = ad::pair_gradient(program, dummy, params);
    out.risk = first.value;
    out.penalty = first.inner.squared_norm();
    out.objective = out.risk;
    out.gradient = std::move(first.outer);
    return out;
  }
  ad::GradientNormTerms terms = ad::gradient_norm_terms(program, dummy, params);
  out.risk = terms.value;
  out.penalty = terms.penalty;
  out.objective = out.risk + lambda * out.penalty;
  out.gradient = std::move(terms.grad_outer);
  out.gradient.axpy(lambda, terms.penalty_grad_outer);
  return out;
}

/// Summed-risk IRMv1 penalty: (Σ_b Σ_j c_j·2(φ−y)·φ)², computed by
/// differentiating the dummy-scaled risk. Empty weights mean all ones.
double irmv1_penalty(const ad::Tensor<double>& predictions, const ad::Tensor<double>& truths,
                     std::span<const double> column_weights = {});

// ---------------------------------------------------------------------------
// Adversarial objectives. Critic inputs are B×(2N+1) rows of flattened
// trajectory plus speed; any MLP parameter set is accepted as a critic.

ad::Tensor<double> critic_inputs(std::span<const models::Trajectory> trajectories);

struct CriticLoss {
  double total = 0.0;
  double wasserstein = 0.0;       // mean D(fake) − mean D(real)
  double gradient_penalty = 0.0;  // mean (||∇_x D(x̂)|| − 1)², unweighted
  ad::ParameterSet gradient;      // of total, wrt critic parameters
};

/// mix[b] ∈ [0, 1] places interpolate b at real + mix·(fake − real).
CriticLoss wgan_critic_loss(const ad::ParameterSet& critic, const ad::Tensor<double>& real,
                            const ad::Tensor<double>& fake, double gp_weight, std::span<const double> mix,
                            bool want_gradient = false);

double wgan_critic_loss(const ad::ParameterSet& critic, std::span<const models::Trajectory> real,
                        std::span<const models::Trajectory> fake, double gp_weight, std::span<const double> mix);

/// −mean D(fake).
double wgan_generator_loss(const ad::ParameterSet& critic, const ad::Tensor<double>& fake);
double wgan_generator_loss(const ad::ParameterSet& critic, std::span<const models::Trajectory> fake);

/// Generator loss of decoder w on latents z (B×d_z) and speeds, with ∇_w.
ad::ValueAndGradient wgan_generator_step(const ad::ParameterSet& critic, const ad::ParameterSet& w,
                                         const ad::Tensor<double>& z, std::span<const double> speeds,
                                         const models::ArchitectureConfig& arch);

// ---------------------------------------------------------------------------
// Latent inference for one sample.

struct LatentTerms {
  double objective = 0.0;
  double risk = 0.0;
  double penalty = 0.0;
  double latent_norm = 0.0;  // ||z||²
  std::vector<double> gradient;  // ∇_z objective
};

/// risk(decode_grid(w0, z, v), truth) + λ·||∇_w risk||² + λ₂·||z||².
LatentTerms latent_terms(std::span<const double> z, const ad::ParameterSet& w0, std::span<const double> truth_flat,
                         double v, const RiskConfig& cfg, const models::ArchitectureConfig& arch,
                         bool want_gradient);

double latent_inference_objective(const models::LatentVector& z, const ad::ParameterSet& w0,
                                  const models::Trajectory& truth, double v, const RiskConfig& cfg,
                                  const models::ArchitectureConfig& arch);

}  // namespace nirm::losses
