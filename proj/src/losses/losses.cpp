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

#include "nirm/losses/losses.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace nirm::losses {

namespace {

ad::ParameterSet single(const std::string& name, ad::Tensor<double> t) {
  ad::ParameterSet p;
  p.add(name, std::move(t));
  return p;
}

void require_batches(std::span<const PreparedBatch> batches, const char* what) {
  if (batches.empty()) throw std::invalid_argument(std::string(what) + ": empty batch list");
  for (const auto& b : batches) {
    if (b.size() == 0) throw std::invalid_argument(std::string(what) + ": empty batch");
  }
}

auto pipeline_program(const PreparedBatch& batch, double alpha, const models::ArchitectureConfig& arch) {
  return [&batch, alpha, &arch](auto& tape, const auto& w, const auto& theta) {
    return pipeline_batch_risk(tape, w, theta, batch, alpha, arch);
  };
}

}  // namespace

void RiskConfig::validate() const {
  if (!(alpha > 0.0)) throw std::invalid_argument("alpha must be > 0");
  if (!(lambda_irm >= 0.0)) throw std::invalid_argument("lambda_irm must be >= 0");
  if (!(lambda_z >= 0.0)) throw std::invalid_argument("lambda_z must be >= 0");
}

ad::Tensor<double> risk_weights(std::size_t rows, std::size_t n_points, double alpha) {
  ad::Tensor<double> w = ad::Tensor<double>::matrix(rows, 2 * n_points, 1.0);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t k = 0; k < n_points; ++k) w.at(r, 2 * k + 1) = alpha;
  }
  return w;
}

double risk(const models::Trajectory& predicted, const models::Trajectory& truth, const RiskConfig& cfg) {
  if (predicted.points.size() != truth.points.size()) {
    throw std::invalid_argument("risk: " + std::to_string(predicted.points.size()) + " vs " +
                                std::to_string(truth.points.size()) + " points");
  }
  double total = 0.0;
  for (std::size_t k = 0; k < truth.points.size(); ++k) {
    const auto& p = predicted.points[k];
    const auto& t = truth.points[k];
    if (std::abs(p.query_time - t.query_time) > 1e-9) {
      throw std::invalid_argument("risk: time grids differ at point " + std::to_string(k));
    }
    const double dl = p.longitudinal - t.longitudinal;
    const double dt = p.lateral - t.lateral;
    total += dl * dl + cfg.alpha * dt * dt;
  }
  return total;
}

double batch_risk(const ad::ParameterSet& theta, const ad::ParameterSet& w, const PreparedBatch& batch,
                  const RiskConfig& cfg, const models::ArchitectureConfig& arch) {
  ad::Tape<double> tape;
  auto wb = ad::bind_constant(tape, w);
  auto tb = ad::bind_constant(tape, theta);
  return pipeline_batch_risk(tape, wb, tb, batch, cfg.alpha, arch).value()[0];
}

double erm_objective(const ad::ParameterSet& theta, const ad::ParameterSet& w,
                     std::span<const PreparedBatch> batches, const RiskConfig& cfg,
                     const models::ArchitectureConfig& arch) {
  require_batches(batches, "erm_objective");
  double total = 0.0;
  std::size_t count = 0;
  for (const auto& b : batches) {
    total += batch_risk(theta, w, b, cfg, arch) * static_cast<double>(b.size());
    count += b.size();
  }
  return total / static_cast<double>(count);
}

double nirm_penalty(const ad::ParameterSet& theta, const ad::ParameterSet& w0, const PreparedBatch& batch,
                    const RiskConfig& cfg, const models::ArchitectureConfig& arch) {
  if (batch.size() == 0) throw std::invalid_argument("nirm_penalty: empty batch");
  return ad::pair_gradient(pipeline_program(batch, cfg.alpha, arch), w0, theta).inner.squared_norm();
}

double nirm_objective(const ad::ParameterSet& theta, const ad::ParameterSet& w0,
                      std::span<const PreparedBatch> batches, const RiskConfig& cfg,
                      const models::ArchitectureConfig& arch) {
  require_batches(batches, "nirm_objective");
  double total = 0.0;
  for (const auto& b : batches) {
    if (cfg.lambda_irm == 0.0) {
      total += batch_risk(theta, w0, b, cfg, arch);
    } else {
      ad::PairGradient g = ad::pair_gradient(pipeline_program(b, cfg.alpha, arch), w0, theta);
      total += g.value + cfg.lambda_irm * g.inner.squared_norm();
    }
  }
  return total;
}

double risk_sum_objective(const ad::ParameterSet& theta, const ad::ParameterSet& w,
                          std::span<const PreparedBatch> batches, const RiskConfig& cfg,
                          const models::ArchitectureConfig& arch) {
  require_batches(batches, "risk_sum_objective");
  double total = 0.0;
  for (const auto& b : batches) total += batch_risk(theta, w, b, cfg, arch);
  return total;
}

ObjectiveTerms nirm_terms(const ad::ParameterSet& theta, const ad::ParameterSet& w, const PreparedBatch& batch,
                          double alpha, double lambda, const models::ArchitectureConfig& arch, bool want_grad_w) {
  if (batch.size() == 0) throw std::invalid_argument("nirm_terms: empty batch");
  auto program = pipeline_program(batch, alpha, arch);
  ObjectiveTerms out;
  if (lambda == 0.0) {
    ad::PairGradient g = ad::pair_gradient(program, w, theta);
    out.risk = g.value;
    out.penalty = g.inner.squared_norm();
    out.objective = out.risk;
    out.grad_theta = std::move(g.outer);
    if (want_grad_w) out.grad_w = std::move(g.inner);
    return out;
  }
  ad::GradientNormTerms t = ad::gradient_norm_terms(program, w, theta);
  out.risk = t.value;
  out.penalty = t.penalty;
  out.objective = out.risk + lambda * out.penalty;
  out.grad_theta = std::move(t.grad_outer);
  out.grad_theta.axpy(lambda, t.penalty_grad_outer);
  if (want_grad_w) {
    out.grad_w = std::move(t.grad_inner);
    out.grad_w.axpy(lambda, t.penalty_grad_inner);
  }
  return out;
}

double irmv1_penalty(const ad::Tensor<double>& predictions, const ad::Tensor<double>& truths,
                     std::span<const double> column_weights) {
  if (predictions.shape() != truths.shape() || predictions.rank() != 2) {
    throw std::invalid_argument("irmv1_penalty: predictions " + ad::shape_string(predictions.shape()) +
                                " vs truths " + ad::shape_string(truths.shape()));
  }
  const std::size_t rows = predictions.rows();
  const std::size_t cols = predictions.cols();
  if (!column_weights.empty() && column_weights.size() != cols) {
    throw std::invalid_argument("irmv1_penalty: " + std::to_string(column_weights.size()) + " weights for " +
                                std::to_string(cols) + " columns");
  }
  ad::Tensor<double> weights = ad::Tensor<double>::matrix(rows, cols, 1.0);
  if (!column_weights.empty()) {
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < cols; ++c) weights.at(r, c) = column_weights[c];
    }
  }
  // Summed risk: the mean form scaled back by the row count.
  auto program = [&](auto& tape, const auto& g) {
    auto scaled = ad::mul_scalar(tape.constant(predictions), g["g"]);
    return ad::scale(mean_weighted_squared_error(tape, scaled, truths, weights), static_cast<double>(rows));
  };
  return ad::gradient(program, single("g", ad::Tensor<double>::scalar(1.0))).squared_norm();
}

ad::Tensor<double> critic_inputs(std::span<const models::Trajectory> trajectories) {
  if (trajectories.empty()) throw std::invalid_argument("critic_inputs: empty batch");
  const std::size_t n = trajectories.front().points.size();
  ad::Tensor<double> x = ad::Tensor<double>::matrix(trajectories.size(), 2 * n + 1);
  for (std::size_t b = 0; b < trajectories.size(); ++b) {
    const auto flat = trajectories[b].flatten();
    if (flat.size() != 2 * n) throw std::invalid_argument("critic_inputs: ragged trajectory batch");
    for (std::size_t j = 0; j < flat.size(); ++j) x.at(b, j) = flat[j];
    x.at(b, 2 * n) = trajectories[b].condition_speed;
  }
  return x;
}

CriticLoss wgan_critic_loss(const ad::ParameterSet& critic, const ad::Tensor<double>& real,
                            const ad::Tensor<double>& fake, double gp_weight, std::span<const double> mix,
                            bool want_gradient) {
  if (real.empty() || fake.empty()) throw std::invalid_argument("wgan_critic_loss: empty batch");
  if (real.shape() != fake.shape() || real.rank() != 2) {
    throw std::invalid_argument("wgan_critic_loss: real " + ad::shape_string(real.shape()) + " vs fake " +
                                ad::shape_string(fake.shape()));
  }
  const std::size_t rows = real.rows();
  const std::size_t cols = real.cols();
  if (mix.size() != rows) throw std::invalid_argument("wgan_critic_loss: one mixing weight per sample required");

  auto wasserstein = [&](auto& tape, const auto& c) {
    auto d_fake = ad::mean(models::critic_scores(c, tape.constant(fake)));
    auto d_real = ad::mean(models::critic_scores(c, tape.constant(real)));
    return d_fake - d_real;
  };

  ad::Tensor<double> hat = ad::Tensor<double>::matrix(rows, cols);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) hat.at(r, c) = real.at(r, c) + mix[r] * (fake.at(r, c) - real.at(r, c));
  }
  const ad::ParameterSet x_hat = single("x", std::move(hat));
  auto score_sum = [](auto& tape, const auto& x, const auto& c) {
    (void)tape;
    return ad::sum(models::critic_scores(c, x["x"]));
  };

  // Rows of ∇_x Σ_b D(x̂_b) are the per-sample input gradients.
  const ad::PairGradient input_grad = ad::pair_gradient(score_sum, x_hat, critic);
  const ad::Tensor<double>& g = input_grad.inner.at(0);
  ad::ParameterSet direction = x_hat.zeros_like();
  double gp = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    double sq = 0.0;
    for (std::size_t c = 0; c < cols; ++c) sq += g.at(r, c) * g.at(r, c);
    const double norm = std::sqrt(sq);
    gp += (norm - 1.0) * (norm - 1.0);
    // d/dg_b of (||g_b|| − 1)²/B, the seed for the mixed second derivative.
    if (norm > 0.0) {
      const double k = 2.0 * (norm - 1.0) / (norm * static_cast<double>(rows));
      for (std::size_t c = 0; c < cols; ++c) direction.at(0).at(r, c) = k * g.at(r, c);
    }
  }
  gp /= static_cast<double>(rows);

  CriticLoss out;
  out.gradient_penalty = gp;
  if (want_gradient) {
    ad::ValueAndGradient w = ad::value_and_gradient(wasserstein, critic);
    out.wasserstein = w.value;
    out.gradient = std::move(w.gradient);
    ad::DirectionalGradient second = ad::directional_gradient(score_sum, x_hat, critic, direction);
    out.gradient.axpy(gp_weight, second.outer_tangent);
  } else {
    out.wasserstein = ad::evaluate(wasserstein, critic)[0];
  }
  out.total = out.wasserstein + gp_weight * gp;
  return out;
}

double wgan_critic_loss(const ad::ParameterSet& critic, std::span<const models::Trajectory> real,
                        std::span<const models::Trajectory> fake, double gp_weight, std::span<const double> mix) {
  if (real.empty() || fake.empty()) throw std::invalid_argument("wgan_critic_loss: empty batch");
  return wgan_critic_loss(critic, critic_inputs(real), critic_inputs(fake), gp_weight, mix).total;
}

double wgan_generator_loss(const ad::ParameterSet& critic, const ad::Tensor<double>& fake) {
  if (fake.empty()) throw std::invalid_argument("wgan_generator_loss: empty batch");
  ad::Tape<double> tape;
  auto c = ad::bind_constant(tape, critic);
  return -ad::mean(models::critic_scores(c, tape.constant(fake))).value()[0];
}

double wgan_generator_loss(const ad::ParameterSet& critic, std::span<const models::Trajectory> fake) {
  if (fake.empty()) throw std::invalid_argument("wgan_generator_loss: empty batch");
  return wgan_generator_loss(critic, critic_inputs(fake));
}

ad::ValueAndGradient wgan_generator_step(const ad::ParameterSet& critic, const ad::ParameterSet& w,
                                         const ad::Tensor<double>& z, std::span<const double> speeds,
                                         const models::ArchitectureConfig& arch) {
  if (speeds.empty() || z.rows() != speeds.size()) {
    throw std::invalid_argument("wgan_generator_step: latent rows must match speeds");
  }
  ad::Tensor<double> speed_col = ad::Tensor<double>::matrix(speeds.size(), 1);
  for (std::size_t b = 0; b < speeds.size(); ++b) speed_col[b] = speeds[b];
  auto program = [&](auto& tape, const auto& wb) {
    auto traj = models::decoder_trajectories(tape, wb, tape.constant(z), speeds, arch);
    auto input = ad::concat_cols(std::vector{traj, tape.constant(speed_col)});
    auto scores = models::critic_scores(ad::bind_constant(tape, critic), input);
    return ad::scale(ad::mean(scores), -1.0);
  };
  return ad::value_and_gradient(program, w);
}

LatentTerms latent_terms(std::span<const double> z, const ad::ParameterSet& w0, std::span<const double> truth_flat,
                         double v, const RiskConfig& cfg, const models::ArchitectureConfig& arch,
                         bool want_gradient) {
  if (z.size() != arch.latent_dim) {
    throw std::invalid_argument("latent_terms: latent has " + std::to_string(z.size()) + " values, expected " +
                                std::to_string(arch.latent_dim));
  }
  if (truth_flat.size() != 2 * arch.n_points) {
    throw std::invalid_argument("latent_terms: truth has " + std::to_string(truth_flat.size()) + " values");
  }
  if (!(v >= 0.0 && v <= arch.v_max)) throw std::out_of_range("latent_terms: speed outside [0, v_max]");

  PreparedBatch one;
  one.truths = ad::Tensor<double>(ad::Shape{1, truth_flat.size()},
                                  std::vector<double>(truth_flat.begin(), truth_flat.end()));
  one.speeds = {v};
  const ad::ParameterSet zs =
      single("z", ad::Tensor<double>(ad::Shape{1, z.size()}, std::vector<double>(z.begin(), z.end())));
  auto program = [&](auto& tape, const auto& w, const auto& zb) {
    return decoded_batch_risk(tape, w, zb["z"], one, cfg.alpha, arch);
  };

  LatentTerms out;
  for (double x : z) out.latent_norm += x * x;
  ad::ParameterSet grad;
  if (cfg.lambda_irm == 0.0) {
    // Penalty switched off: w0 stays a constant and is never differentiated.
    auto risk_only = [&](auto& tape, const auto& zb) {
      return decoded_batch_risk(tape, ad::bind_constant(tape, w0), zb["z"], one, cfg.alpha, arch);
    };
    if (want_gradient) {
      ad::ValueAndGradient g = ad::value_and_gradient(risk_only, zs);
      out.risk = g.value;
      grad = std::move(g.gradient);
    } else {
      out.risk = ad::evaluate(risk_only, zs)[0];
    }
  } else if (want_gradient) {
    ad::GradientNormTerms t = ad::gradient_norm_terms(program, w0, zs);
    out.risk = t.value;
    out.penalty = t.penalty;
    grad = std::move(t.grad_outer);
    grad.axpy(cfg.lambda_irm, t.penalty_grad_outer);
  } else {
    ad::PairGradient g = ad::pair_gradient(program, w0, zs);
    out.risk = g.value;
    out.penalty = g.inner.squared_norm();
  }
  out.objective = out.risk + cfg.lambda_irm * out.penalty + cfg.lambda_z * out.latent_norm;
  if (want_gradient) {
    out.gradient = grad.at(0).values();
    for (std::size_t i = 0; i < z.size(); ++i) out.gradient[i] += 2.0 * cfg.lambda_z * z[i];
  }
  return out;
}

double latent_inference_objective(const models::LatentVector& z, const ad::ParameterSet& w0,
                                  const models::Trajectory& truth, double v, const RiskConfig& cfg,
                                  const models::ArchitectureConfig& arch) {
  const auto grid = models::time_grid(arch.horizon, arch.n_points);
  if (truth.points.size() != grid.size()) throw std::invalid_argument("latent_inference_objective: grid mismatch");
  for (std::size_t k = 0; k < grid.size(); ++k) {
    if (std::abs(truth.points[k].query_time - grid[k]) > 1e-9) {
      throw std::invalid_argument("latent_inference_objective: grid mismatch at point " + std::to_string(k));
    }
  }
  return latent_terms(z.values, w0, truth.flatten(), v, cfg, arch, false).objective;
}

}  // namespace nirm::losses
