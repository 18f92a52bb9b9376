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

#include <cmath>
#include <random>

#include "doctest.h"
#include "nirm/losses/losses.hpp"
#include "nirm/models/models.hpp"
#include "support/oracles.hpp"

namespace ad = nirm::ad;
namespace models = nirm::models;
namespace losses = nirm::losses;
using ad::ParameterSet;
using nirm::testing::close;
using nirm::testing::compare;
using nirm::testing::fd_gradient;
using nirm::testing::random_tensor;
using nirm::testing::uniform;

namespace {

models::ArchitectureConfig tiny_arch() {
  models::ArchitectureConfig a;
  a.latent_dim = 3;
  a.decoder_hidden = {6, 6, 6};
  a.encoder_hidden = {5, 5};
  a.critic_hidden = {5, 5};
  a.n_points = 4;
  a.invariant_dim = 3;
  a.spurious_dim = 3;
  return a;
}

models::Trajectory make_traj(std::vector<double> flat, double speed, const models::ArchitectureConfig& arch) {
  return models::Trajectory::from_flat(flat, models::time_grid(arch.horizon, arch.n_points), speed);
}

losses::EnvironmentBatch random_batch(std::mt19937_64& rng, std::size_t n, int env,
                                      const models::ArchitectureConfig& arch) {
  losses::EnvironmentBatch b;
  b.environment_id = env;
  for (std::size_t i = 0; i < n; ++i) {
    nirm::synthdata::Observation o;
    for (std::size_t k = 0; k < arch.invariant_dim; ++k) o.invariant_features.push_back(uniform(rng, -2, 2));
    for (std::size_t k = 0; k < arch.spurious_dim; ++k) o.spurious_features.push_back(uniform(rng, -2, 2));
    o.speed = uniform(rng, 0.0, arch.v_max);
    o.environment_id = env;
    std::vector<double> flat(2 * arch.n_points);
    for (double& v : flat) v = uniform(rng, -5, 5);
    b.observations.push_back(o);
    b.truths.push_back(make_traj(flat, o.speed, arch));
  }
  return b;
}

/// Replaces the targets with the pipeline's own predictions.
losses::EnvironmentBatch perfect_targets(losses::EnvironmentBatch b, const ParameterSet& theta,
                                         const ParameterSet& w, const models::ArchitectureConfig& arch) {
  for (std::size_t i = 0; i < b.size(); ++i) {
    b.truths[i] = models::decode_grid(w, models::encode(theta, b.observations[i], arch), b.observations[i].speed, arch);
  }
  return b;
}

}  // namespace

TEST_CASE("risk: zero residual, single-point case, symmetry, grid mismatch") {
  const auto arch = tiny_arch();
  losses::RiskConfig cfg;
  CHECK(cfg.alpha == 5.0);
  CHECK(cfg.lambda_irm == 1.0);
  CHECK(cfg.lambda_z == 1e-3);

  const auto a = make_traj({1, 2, 3, 4, 5, 6, 7, 8}, 3.0, arch);
  CHECK(losses::risk(a, a, cfg) == 0.0);

  models::Trajectory p1{{{1.0, 2.0, 1.0}}, 0.0};
  models::Trajectory t1{{{0.0, 0.0, 1.0}}, 0.0};
  CHECK(losses::risk(p1, t1, cfg) == 21.0);

  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> x(8), y(8);
    for (double& v : x) v = uniform(rng, -10, 10);
    for (double& v : y) v = uniform(rng, -10, 10);
    const auto tx = make_traj(x, 1.0, arch);
    const auto ty = make_traj(y, 1.0, arch);
    CHECK(losses::risk(tx, ty, cfg) == losses::risk(ty, tx, cfg));
    CHECK(losses::risk(tx, ty, cfg) > 0.0);
  }

  models::Trajectory shifted = a;
  shifted.points[2].query_time += 0.01;
  CHECK_THROWS_AS(losses::risk(a, shifted, cfg), std::invalid_argument);
  models::Trajectory shorter = a;
  shorter.points.pop_back();
  CHECK_THROWS_AS(losses::risk(a, shorter, cfg), std::invalid_argument);

  losses::RiskConfig bad;
  bad.alpha = 0.0;
  CHECK_THROWS_WITH_AS(bad.validate(), doctest::Contains("alpha"), std::invalid_argument);
}

TEST_CASE("erm_objective: perfect predictor, single sample, equal batches") {
  const auto arch = tiny_arch();
  const losses::RiskConfig cfg;
  std::mt19937_64 rng(12);
  const ParameterSet theta = models::init_encoder(arch, 1);
  const ParameterSet w = models::init_decoder(arch, 2);

  const auto perfect = losses::prepare(perfect_targets(random_batch(rng, 6, 0, arch), theta, w, arch), arch);
  CHECK(losses::erm_objective(theta, w, std::span(&perfect, 1), cfg, arch) == 0.0);

  const auto raw1 = random_batch(rng, 1, 0, arch);
  const auto one = losses::prepare(raw1, arch);
  const auto pred = models::decode_grid(w, models::encode(theta, raw1.observations[0], arch), raw1.observations[0].speed, arch);
  CHECK(close(losses::erm_objective(theta, w, std::span(&one, 1), cfg, arch), losses::risk(pred, raw1.truths[0], cfg),
              1e-12, 0.0));

  const std::vector<losses::PreparedBatch> two = {losses::prepare(random_batch(rng, 5, 0, arch), arch),
                                                  losses::prepare(random_batch(rng, 5, 1, arch), arch)};
  const double r0 = losses::batch_risk(theta, w, two[0], cfg, arch);
  const double r1 = losses::batch_risk(theta, w, two[1], cfg, arch);
  CHECK(close(losses::erm_objective(theta, w, two, cfg, arch), 0.5 * (r0 + r1), 1e-12, 0.0));

  CHECK_THROWS_AS(losses::erm_objective(theta, w, std::span<const losses::PreparedBatch>(), cfg, arch),
                  std::invalid_argument);
}

TEST_CASE("NIRM penalty: toy scalar decoder oracle") {
  // y = w·z with z = 1 and truth 2; risk (w − 2)², so at w0 = 1 the
  // gradient is −2, the penalty 4 and the λ = 1 objective 1 + 4 = 5.
  ParameterSet w0;
  w0.add("w", ad::Tensor<double>::scalar(1.0));
  ParameterSet theta;
  theta.add("z", ad::Tensor<double>(ad::Shape{1, 1}, {1.0}));
  const ad::Tensor<double> truth(ad::Shape{1, 1}, {2.0});
  const ad::Tensor<double> weights(ad::Shape{1, 1}, {1.0});
  auto program = [&](auto& tape, const auto& w, const auto& th) {
    return losses::mean_weighted_squared_error(tape, ad::mul_scalar(th["z"], w["w"]), truth, weights);
  };
  const auto terms = ad::gradient_norm_terms(program, w0, theta);
  CHECK(terms.grad_inner.at(0)[0] == -2.0);
  CHECK(terms.penalty == 4.0);
  CHECK(terms.value + 1.0 * terms.penalty == 5.0);
  // d/dz of 4(wz − 2)²z² = 8(wz − 2)wz² + 8(wz − 2)²z: 0 at z = 1, 6 at z = 0.5.
  CHECK(terms.penalty_grad_outer.at(0)[0] == 0.0);
  theta.at("z")[0] = 0.5;
  CHECK(ad::gradient_norm_terms(program, w0, theta).penalty_grad_outer.at(0)[0] == 6.0);
}

TEST_CASE("NIRM penalty: zero residual, nonnegativity, ERM reduction") {
  const auto arch = tiny_arch();
  std::mt19937_64 rng(13);
  losses::RiskConfig cfg;
  const ParameterSet theta = models::init_encoder(arch, 3);
  const ParameterSet w = models::init_decoder(arch, 4);

  const auto perfect = losses::prepare(perfect_targets(random_batch(rng, 4, 2, arch), theta, w, arch), arch);
  CHECK(losses::nirm_penalty(theta, w, perfect, cfg, arch) == 0.0);
  cfg.lambda_irm = 7.5;
  CHECK(losses::nirm_objective(theta, w, std::span(&perfect, 1), cfg, arch) == 0.0);

  for (int trial = 0; trial < 1000; ++trial) {
    const auto arch_t = tiny_arch();
    const ParameterSet th = nirm::testing::random_like(theta, rng, -1, 1);
    const ParameterSet wt = nirm::testing::random_like(w, rng, -1, 1);
    const auto batch = losses::prepare(random_batch(rng, 2, 0, arch_t), arch_t);
    const double p = losses::nirm_penalty(th, wt, batch, cfg, arch_t);
    REQUIRE(std::isfinite(p));
    CHECK(p >= 0.0);
  }

  cfg.lambda_irm = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const std::vector<losses::PreparedBatch> batches = {losses::prepare(random_batch(rng, 7, 0, arch), arch),
                                                        losses::prepare(random_batch(rng, 7, 1, arch), arch)};
    const double nirm = losses::nirm_objective(theta, w, batches, cfg, arch);
    const double risk_only = losses::risk_sum_objective(theta, w, batches, cfg, arch);
    CHECK(std::abs(nirm - risk_only) <= 1e-12);
    // Equal-size batches: Σ_e R^e = (number of batches)·ERM.
    CHECK(close(nirm, 2.0 * losses::erm_objective(theta, w, batches, cfg, arch), 1e-12, 0.0));
  }
}

TEST_CASE("nirm_terms gradients match finite differences") {
  const auto arch = tiny_arch();
  std::mt19937_64 rng(14);
  for (int trial = 0; trial < 5; ++trial) {
    const ParameterSet theta = models::init_encoder(arch, rng());
    const ParameterSet w = models::init_decoder(arch, rng());
    const auto batch = losses::prepare(random_batch(rng, 3, 0, arch), arch);
    const double lambda = trial == 0 ? 0.0 : 0.3;
    const auto terms = losses::nirm_terms(theta, w, batch, 5.0, lambda, arch, true);

    auto objective = [&](const ParameterSet& th, const ParameterSet& wt) {
      const double r = losses::batch_risk(th, wt, batch, losses::RiskConfig{}, arch);
      losses::RiskConfig c;
      return r + lambda * losses::nirm_penalty(th, wt, batch, c, arch);
    };
    CHECK(close(terms.objective, objective(theta, w), 1e-12, 1e-12));
    const auto fd_theta = fd_gradient([&](const ParameterSet& p) { return objective(p, w); }, theta, 1e-5);
    const auto fd_w = fd_gradient([&](const ParameterSet& p) { return objective(theta, p); }, w, 1e-5);
    // The last decoder bias cancels under anchoring; its exact gradient is
    // zero and the difference quotient only carries roundoff.
    const std::string e1 = compare(terms.grad_theta, fd_theta, 1e-4, 1e-5);
    const std::string e2 = compare(terms.grad_w, fd_w, 1e-4, 1e-5);
    CHECK_MESSAGE(e1.empty(), e1);
    CHECK_MESSAGE(e2.empty(), e2);
  }
}

TEST_CASE("IRMv1 penalty: examples and closed form") {
  const ad::Tensor<double> one(ad::Shape{1, 1}, {1.0});
  const ad::Tensor<double> two(ad::Shape{1, 1}, {2.0});
  CHECK(losses::irmv1_penalty(one, one) == 0.0);
  CHECK(losses::irmv1_penalty(two, one) == 16.0);

  std::mt19937_64 rng(15);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t rows = 1 + rng() % 20;
    const std::size_t cols = 1 + rng() % 4;
    const auto phi = random_tensor(ad::Shape{rows, cols}, rng, -3, 3);
    const auto y = random_tensor(ad::Shape{rows, cols}, rng, -3, 3);
    std::vector<double> c(cols);
    for (double& v : c) v = uniform(rng, 0.5, 5.0);
    double s = 0.0;
    double sw = 0.0;
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t k = 0; k < cols; ++k) {
        s += 2.0 * (phi.at(r, k) - y.at(r, k)) * phi.at(r, k);
        sw += c[k] * 2.0 * (phi.at(r, k) - y.at(r, k)) * phi.at(r, k);
      }
    }
    CHECK(close(losses::irmv1_penalty(phi, y), s * s, 1e-8, 0.0));
    CHECK(close(losses::irmv1_penalty(phi, y, c), sw * sw, 1e-8, 0.0));
  }
  CHECK_THROWS_AS(losses::irmv1_penalty(one, ad::Tensor<double>(ad::Shape{1, 2}, {1.0, 1.0})),
                  std::invalid_argument);
}

TEST_CASE("irmv1_terms gradient and penalty-off reduction") {
  std::mt19937_64 rng(16);
  ParameterSet params;
  params.add("A", random_tensor(ad::Shape{3, 2}, rng, -1, 1));
  params.add("b", random_tensor(ad::Shape{2}, rng, -1, 1));
  const auto x = random_tensor(ad::Shape{6, 3}, rng, -2, 2);
  const auto y = random_tensor(ad::Shape{6, 2}, rng, -2, 2);
  const auto weights = losses::risk_weights(6, 1, 5.0);
  auto model = [&](auto& tape, const auto& p) { return ad::tanh(ad::affine(tape.constant(x), p["A"], p["b"])); };

  auto value = [&](const ParameterSet& p, double lambda) {
    const auto phi = ad::evaluate([&](auto& tape, const auto& q) { return model(tape, q); }, p);
    double r = 0.0;
    double d = 0.0;
    for (std::size_t i = 0; i < 6; ++i) {
      for (std::size_t k = 0; k < 2; ++k) {
        const double e = phi.at(i, k) - y.at(i, k);
        r += weights.at(i, k) * e * e / 6.0;
        d += weights.at(i, k) * 2.0 * e * phi.at(i, k) / 6.0;
      }
    }
    return r + lambda * d * d;
  };
  for (double lambda : {0.0, 2.0}) {
    const auto terms = losses::irmv1_terms(model, params, y, weights, lambda);
    CHECK(close(terms.objective, value(params, lambda), 1e-12, 1e-14));
    const auto fd = fd_gradient([&](const ParameterSet& p) { return value(p, lambda); }, params, 1e-6);
    const std::string err = compare(terms.gradient, fd, 1e-6, 1e-9);
    CHECK_MESSAGE(err.empty(), err);
  }
  // λ = 0 is plain weighted least squares.
  const auto plain = ad::value_and_gradient(
      [&](auto& tape, const auto& p) { return losses::mean_weighted_squared_error(tape, model(tape, p), y, weights); },
      params);
  const auto off = losses::irmv1_terms(model, params, y, weights, 0.0);
  CHECK(off.objective == plain.value);
  CHECK(off.gradient == plain.gradient);
}

namespace {

ParameterSet linear_critic(std::size_t in, double norm, std::mt19937_64& rng) {
  ad::Tensor<double> u = random_tensor(ad::Shape{in, 1}, rng, -1, 1);
  double sq = 0.0;
  for (double v : u.values()) sq += v * v;
  for (double& v : u.values()) v *= norm / std::sqrt(sq);
  ParameterSet p;
  p.add("l0.weight", std::move(u));
  p.add("l0.bias", ad::Tensor<double>(ad::Shape{1}, {0.3}));
  return p;
}

}  // namespace

TEST_CASE("WGAN-GP critic loss: linear critics and identical batches") {
  const auto arch = tiny_arch();
  std::mt19937_64 rng(17);
  const std::size_t in = arch.critic_input_dim();
  const auto real = random_tensor(ad::Shape{8, in}, rng, -10, 10);
  const auto fake = random_tensor(ad::Shape{8, in}, rng, -10, 10);
  std::vector<double> mix(8);
  for (double& m : mix) m = uniform(rng, 0, 1);

  const auto unit = losses::wgan_critic_loss(linear_critic(in, 1.0, rng), real, fake, 10.0, mix);
  CHECK(std::abs(unit.gradient_penalty) <= 1e-20);
  const auto doubled = losses::wgan_critic_loss(linear_critic(in, 2.0, rng), real, fake, 10.0, mix);
  CHECK(close(doubled.gradient_penalty, 1.0, 1e-10, 0.0));
  CHECK(close(doubled.total, doubled.wasserstein + 10.0 * 1.0, 1e-10, 0.0));

  const ParameterSet critic = models::init_critic(arch, 5);
  const auto same = losses::wgan_critic_loss(critic, real, real, 10.0, mix);
  CHECK(same.wasserstein == 0.0);

  CHECK_THROWS_AS(losses::wgan_critic_loss(critic, ad::Tensor<double>(), ad::Tensor<double>(), 10.0, {}),
                  std::invalid_argument);
}

TEST_CASE("WGAN-GP critic gradient matches finite differences") {
  const auto arch = tiny_arch();
  std::mt19937_64 rng(18);
  const std::size_t in = arch.critic_input_dim();
  for (int trial = 0; trial < 3; ++trial) {
    const ParameterSet critic = models::init_critic(arch, rng());
    const auto real = random_tensor(ad::Shape{5, in}, rng, -3, 3);
    const auto fake = random_tensor(ad::Shape{5, in}, rng, -3, 3);
    std::vector<double> mix(5);
    for (double& m : mix) m = uniform(rng, 0, 1);
    const auto loss = losses::wgan_critic_loss(critic, real, fake, 10.0, mix, true);
    const auto fd = fd_gradient(
        [&](const ParameterSet& p) { return losses::wgan_critic_loss(p, real, fake, 10.0, mix).total; }, critic, 1e-6);
    const std::string err = compare(loss.gradient, fd, 1e-5, 1e-8);
    CHECK_MESSAGE(err.empty(), err);
  }
}

TEST_CASE("WGAN generator loss") {
  const auto arch = tiny_arch();
  std::mt19937_64 rng(19);
  std::vector<models::Trajectory> fake;
  for (int i = 0; i < 6; ++i) {
    std::vector<double> flat(2 * arch.n_points);
    for (double& v : flat) v = uniform(rng, -10, 10);
    fake.push_back(make_traj(flat, uniform(rng, 0, 10), arch));
  }
  const ParameterSet critic = models::init_critic(arch, 6);
  CHECK(losses::wgan_generator_loss(critic.zeros_like(), fake) == 0.0);
  double mean = 0.0;
  for (const auto& t : fake) mean += models::critic_score(critic, t.flatten(), t.condition_speed, arch);
  mean /= static_cast<double>(fake.size());
  CHECK(close(losses::wgan_generator_loss(critic, fake), -mean, 1e-12, 0.0));

  const ParameterSet w = models::init_decoder(arch, 7);
  const auto z = random_tensor(ad::Shape{4, arch.latent_dim}, rng, -1, 1);
  const std::vector<double> speeds = {1.0, 4.0, 7.5, 9.0};
  const auto step = losses::wgan_generator_step(critic, w, z, speeds, arch);
  auto f = [&](const ParameterSet& p) {
    std::vector<models::Trajectory> gen;
    for (std::size_t b = 0; b < 4; ++b) {
      models::LatentVector zb{{z.at(b, 0), z.at(b, 1), z.at(b, 2)}};
      gen.push_back(models::decode_grid(p, zb, speeds[b], arch));
    }
    return losses::wgan_generator_loss(critic, gen);
  };
  CHECK(close(step.value, f(w), 1e-12, 1e-14));
  const std::string err = compare(step.gradient, fd_gradient(f, w, 1e-6), 1e-4, 1e-8);
  CHECK_MESSAGE(err.empty(), err);
}

TEST_CASE("latent inference objective") {
  const auto arch = tiny_arch();
  std::mt19937_64 rng(20);
  const ParameterSet w0 = models::init_decoder(arch, 8);
  losses::RiskConfig cfg;
  cfg.lambda_irm = 0.7;
  cfg.lambda_z = 0.0;
  for (int trial = 0; trial < 10; ++trial) {
    models::LatentVector z_star;
    for (std::size_t i = 0; i < arch.latent_dim; ++i) z_star.values.push_back(uniform(rng, -1.5, 1.5));
    const double v = uniform(rng, 0, arch.v_max);
    const auto target = models::decode_grid(w0, z_star, v, arch);
    CHECK(losses::latent_inference_objective(z_star, w0, target, v, cfg, arch) == 0.0);

    models::LatentVector z;
    for (std::size_t i = 0; i < arch.latent_dim; ++i) z.values.push_back(uniform(rng, -1.5, 1.5));
    losses::RiskConfig off;
    off.lambda_irm = 0.0;
    off.lambda_z = 0.0;
    const double plain = losses::risk(models::decode_grid(w0, z, v, arch), target, off);
    CHECK(close(losses::latent_inference_objective(z, w0, target, v, off, arch), plain, 1e-12, 1e-14));

    losses::RiskConfig reg = off;
    reg.lambda_z = 0.25;
    double sq = 0.0;
    for (double x : z.values) sq += x * x;
    CHECK(losses::latent_inference_objective(z, w0, target, v, reg, arch) -
              losses::latent_inference_objective(z, w0, target, v, off, arch) ==
          doctest::Approx(0.25 * sq).epsilon(1e-12));

    losses::RiskConfig full;
    full.lambda_irm = 0.5;
    full.lambda_z = 0.1;
    const auto terms = losses::latent_terms(z.values, w0, target.flatten(), v, full, arch, true);
    ParameterSet zs;
    zs.add("z", ad::Tensor<double>(ad::Shape{arch.latent_dim}, z.values));
    auto f = [&](const ParameterSet& p) {
      return losses::latent_inference_objective(models::LatentVector{p.at(0).values()}, w0, target, v, full, arch);
    };
    const auto fd = fd_gradient(f, zs, 1e-6);
    for (std::size_t i = 0; i < arch.latent_dim; ++i) CHECK(close(terms.gradient[i], fd.at(0)[i], 1e-4, 1e-7));
  }
}
