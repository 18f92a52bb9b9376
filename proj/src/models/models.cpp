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

#include "nirm/models/models.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace nirm::models {

namespace {

using D2 = ad::Dual<ad::Dual<double>>;

void check_time(double t, const ArchitectureConfig& arch) {
  if (!(t >= 0.0 && t <= arch.horizon)) {
    throw std::out_of_range("decode: t = " + std::to_string(t) + " outside [0, " + std::to_string(arch.horizon) + "]");
  }
}

void check_speed(double v, const ArchitectureConfig& arch) {
  if (!(v >= 0.0 && v <= arch.v_max)) {
    throw std::out_of_range("decode: v = " + std::to_string(v) + " outside [0, " + std::to_string(arch.v_max) + "]");
  }
}

void check_latent(const LatentVector& z, const ArchitectureConfig& arch) {
  if (z.values.size() != arch.latent_dim) {
    throw std::invalid_argument("decode: latent has " + std::to_string(z.values.size()) + " entries, expected " +
                                std::to_string(arch.latent_dim));
  }
}

ad::Tensor<double> latent_row(const LatentVector& z) {
  return ad::Tensor<double>(ad::Shape{1, z.values.size()}, z.values);
}

}  // namespace

void ArchitectureConfig::validate() const {
  auto fail = [](const std::string& field, const std::string& why) {
    throw std::invalid_argument("architecture." + field + ": " + why);
  };
  if (latent_dim == 0) fail("latent_dim", "must be positive");
  for (const auto* widths : {&decoder_hidden, &encoder_hidden, &critic_hidden}) {
    for (std::size_t w : *widths) {
      if (w == 0) {
        fail(widths == &decoder_hidden ? "decoder_hidden" : widths == &encoder_hidden ? "encoder_hidden" : "critic_hidden",
             "widths must be positive");
      }
    }
  }
  if (decoder_hidden.empty()) fail("decoder_hidden", "needs at least one hidden layer");
  if (!(horizon > 0.0)) fail("horizon", "must be > 0");
  if (n_points < 2) fail("n_points", "must be >= 2");
  if (!(v_max > 0.0)) fail("v_max", "must be > 0");
  if (invariant_dim == 0) fail("invariant_dim", "must be positive");
  if (spurious_dim == 0) fail("spurious_dim", "must be positive");
}

std::vector<double> Trajectory::flatten() const {
  std::vector<double> out;
  out.reserve(points.size() * 2);
  for (const TrajectoryPoint& p : points) {
    out.push_back(p.longitudinal);
    out.push_back(p.lateral);
  }
  return out;
}

Trajectory Trajectory::from_flat(std::span<const double> flat, std::span<const double> times, double speed) {
  if (flat.size() != 2 * times.size()) {
    throw std::invalid_argument("trajectory: " + std::to_string(flat.size()) + " values for " +
                                std::to_string(times.size()) + " query times");
  }
  Trajectory t;
  t.condition_speed = speed;
  for (std::size_t k = 0; k < times.size(); ++k) t.points.push_back({flat[2 * k], flat[2 * k + 1], times[k]});
  return t;
}

std::vector<double> time_grid(double horizon, std::size_t n_points) {
  std::vector<double> t(n_points);
  for (std::size_t k = 0; k < n_points; ++k) {
    t[k] = horizon * static_cast<double>(k + 1) / static_cast<double>(n_points);
  }
  return t;
}

ad::ParameterSet init_mlp(std::size_t in, const std::vector<std::size_t>& hidden, std::size_t out, Rng& rng) {
  ad::ParameterSet p;
  std::vector<std::size_t> widths{in};
  widths.insert(widths.end(), hidden.begin(), hidden.end());
  widths.push_back(out);
  for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
    const double s = 1.0 / std::sqrt(static_cast<double>(widths[i]));
    ad::Tensor<double> weight = ad::Tensor<double>::matrix(widths[i], widths[i + 1]);
    for (double& x : weight.values()) x = rng.uniform(-s, s);
    ad::Tensor<double> bias(ad::Shape{widths[i + 1]});
    for (double& x : bias.values()) x = rng.uniform(-s, s);
    p.add("l" + std::to_string(i) + ".weight", std::move(weight));
    p.add("l" + std::to_string(i) + ".bias", std::move(bias));
  }
  return p;
}

void check_mlp_layout(const ad::ParameterSet& p, std::size_t in, const std::vector<std::size_t>& hidden,
                      std::size_t out, const char* network) {
  std::vector<std::size_t> widths{in};
  widths.insert(widths.end(), hidden.begin(), hidden.end());
  widths.push_back(out);
  const std::size_t layers = widths.size() - 1;
  auto fail = [&](const std::string& why) { throw std::invalid_argument(std::string(network) + ": " + why); };
  if (p.size() != 2 * layers) {
    fail("expected " + std::to_string(2 * layers) + " tensors, found " + std::to_string(p.size()));
  }
  for (std::size_t i = 0; i < layers; ++i) {
    const std::string w = "l" + std::to_string(i) + ".weight";
    const std::string b = "l" + std::to_string(i) + ".bias";
    if (p.name(2 * i) != w || p.name(2 * i + 1) != b) fail("unexpected tensor order at layer " + std::to_string(i));
    if (p.at(2 * i).shape() != ad::Shape{widths[i], widths[i + 1]}) {
      fail(w + " has shape " + ad::shape_string(p.at(2 * i).shape()));
    }
    if (p.at(2 * i + 1).shape() != ad::Shape{widths[i + 1]}) {
      fail(b + " has shape " + ad::shape_string(p.at(2 * i + 1).shape()));
    }
  }
}

ad::Tensor<double> observation_matrix(std::span<const synthdata::Observation> obs, const ArchitectureConfig& arch) {
  if (obs.empty()) throw std::invalid_argument("encode: no observations");
  ad::Tensor<double> m = ad::Tensor<double>::matrix(obs.size(), arch.observation_dim());
  for (std::size_t r = 0; r < obs.size(); ++r) {
    const synthdata::Observation& o = obs[r];
    if (o.invariant_features.size() != arch.invariant_dim || o.spurious_features.size() != arch.spurious_dim) {
      throw std::invalid_argument("encode: observation feature dimensions (" +
                                  std::to_string(o.invariant_features.size()) + ", " +
                                  std::to_string(o.spurious_features.size()) + ") do not match architecture (" +
                                  std::to_string(arch.invariant_dim) + ", " + std::to_string(arch.spurious_dim) + ")");
    }
    std::size_t c = 0;
    for (double x : o.invariant_features) m.at(r, c++) = x;
    for (double x : o.spurious_features) m.at(r, c++) = x;
    m.at(r, c) = o.speed / arch.v_max;
  }
  return m;
}

ad::ParameterSet init_decoder(const ArchitectureConfig& arch, std::uint64_t seed) {
  Rng rng = Rng::derive(seed, "init/decoder");
  return init_mlp(arch.latent_dim + 2, arch.decoder_hidden, 2, rng);
}

ad::ParameterSet init_encoder(const ArchitectureConfig& arch, std::uint64_t seed) {
  Rng rng = Rng::derive(seed, "init/encoder");
  return init_mlp(arch.observation_dim(), arch.encoder_hidden, arch.latent_dim, rng);
}

ad::ParameterSet init_critic(const ArchitectureConfig& arch, std::uint64_t seed) {
  Rng rng = Rng::derive(seed, "init/critic");
  return init_mlp(arch.critic_input_dim(), arch.critic_hidden, 1, rng);
}

void check_decoder(const ad::ParameterSet& w, const ArchitectureConfig& arch) {
  check_mlp_layout(w, arch.latent_dim + 2, arch.decoder_hidden, 2, "decoder");
}

void check_encoder(const ad::ParameterSet& theta, const ArchitectureConfig& arch) {
  check_mlp_layout(theta, arch.observation_dim(), arch.encoder_hidden, arch.latent_dim, "encoder");
}

void check_critic(const ad::ParameterSet& params, const ArchitectureConfig& arch) {
  check_mlp_layout(params, arch.critic_input_dim(), arch.critic_hidden, 1, "critic");
}

std::array<double, 2> decode(const ad::ParameterSet& w, double t, const LatentVector& z, double v,
                             const ArchitectureConfig& arch) {
  check_time(t, arch);
  check_speed(v, arch);
  check_latent(z, arch);
  ad::Tape<double> tape;
  ad::Bound<double> wb = ad::bind_constant(tape, w);
  const double speeds[] = {v};
  const double times[] = {t};
  ad::Var<double> y = decoder_displacements(tape, wb, tape.constant(latent_row(z)), speeds, times, arch);
  return {y.value()[0], y.value()[1]};
}

TrajectoryDerivatives decode_derivatives(const ad::ParameterSet& w, std::span<const double> times,
                                         const LatentVector& z, double v, const ArchitectureConfig& arch) {
  for (double t : times) check_time(t, arch);
  check_speed(v, arch);
  check_latent(z, arch);
  if (times.empty()) return {};
  // Seed d(t/horizon)/dt = 1/horizon in both nesting levels so the inner
  // tangent carries dy/dt and the doubly-nested tangent carries d²y/dt².
  const double rate = 1.0 / arch.horizon;
  const std::size_t q = times.size();
  ad::Tensor<D2> t_col(ad::Shape{q, 1});
  for (std::size_t i = 0; i < q; ++i) {
    t_col[i] = D2(ad::Dual<double>(times[i] * rate, rate), ad::Dual<double>(rate, 0.0));
  }
  ad::Tape<D2> tape;
  ad::Bound<D2> wb = ad::bind_constant(tape, w);
  ad::Var<D2> z_rows = ad::gather_rows(tape.constant(latent_row(z)), std::vector<std::size_t>(q, 0));
  ad::Var<D2> v_col = tape.constant(ad::Tensor<double>(ad::Shape{q, 1}, v / arch.v_max));
  ad::Var<D2> raw = decoder_raw(wb, tape.constant(std::move(t_col)), z_rows, v_col, arch);
  TrajectoryDerivatives out;
  for (std::size_t i = 0; i < q; ++i) {
    const D2& lon = raw.value().at(i, 0);
    const D2& lat = raw.value().at(i, 1);
    out.velocity.push_back({lon.v.d, lat.v.d});
    out.acceleration.push_back({lon.d.d, lat.d.d});
  }
  return out;
}

Trajectory decode_grid(const ad::ParameterSet& w, const LatentVector& z, double v, const ArchitectureConfig& arch) {
  check_speed(v, arch);
  check_latent(z, arch);
  const std::vector<double> times = time_grid(arch.horizon, arch.n_points);
  ad::Tape<double> tape;
  ad::Bound<double> wb = ad::bind_constant(tape, w);
  const double speeds[] = {v};
  ad::Var<double> y = decoder_displacements(tape, wb, tape.constant(latent_row(z)), speeds, times, arch);
  return Trajectory::from_flat(y.value().data(), times, v);
}

LatentVector encode(const ad::ParameterSet& theta, const synthdata::Observation& obs, const ArchitectureConfig& arch) {
  ad::Tape<double> tape;
  ad::Bound<double> tb = ad::bind_constant(tape, theta);
  const synthdata::Observation one[] = {obs};
  ad::Var<double> z = encoder_latents(tb, tape.constant(observation_matrix(one, arch)));
  return LatentVector{z.value().values()};
}

double critic_score(const ad::ParameterSet& params, std::span<const double> traj_points, double v,
                    const ArchitectureConfig& arch) {
  if (traj_points.size() != 2 * arch.n_points) {
    throw std::invalid_argument("critic_score: expected " + std::to_string(2 * arch.n_points) + " values, got " +
                                std::to_string(traj_points.size()));
  }
  ad::Tensor<double> input = ad::Tensor<double>::matrix(1, arch.critic_input_dim());
  std::copy(traj_points.begin(), traj_points.end(), input.values().begin());
  input[2 * arch.n_points] = v;
  ad::Tape<double> tape;
  ad::Bound<double> pb = ad::bind_constant(tape, params);
  return critic_scores(pb, tape.constant(std::move(input))).value()[0];
}

}  // namespace nirm::models
