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

#include "nirm/pipelines/training.hpp"

#include <charconv>
#include <cmath>
#include <map>
#include <sstream>

#include "nirm/core/io.hpp"
#include "nirm/losses/losses.hpp"
#include "nirm/models/checkpoint.hpp"
#include "nirm/models/models.hpp"
#include "nirm/pipelines/model.hpp"

namespace nirm::pipelines {

using ad::ParameterSet;
using ad::Tensor;
using losses::PreparedBatch;

namespace {

void guard(double value, const char* stage, std::size_t step, const char* what) {
  if (!std::isfinite(value)) {
    throw DivergenceError(std::string(stage) + ": non-finite " + what + " at step " + std::to_string(step));
  }
}

bool should_log(const TrainConfig& cfg, std::size_t step, std::size_t total) {
  return step % cfg.log_every == 0 || step == total;
}

Tensor<double> select_rows(const Tensor<double>& m, const std::vector<std::size_t>& rows) {
  Tensor<double> out = Tensor<double>::matrix(rows.size(), m.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t c = 0; c < m.cols(); ++c) out.at(i, c) = m.at(rows[i], c);
  }
  return out;
}

Tensor<double> with_speed_column(const Tensor<double>& traj, std::span<const double> speeds) {
  Tensor<double> out = Tensor<double>::matrix(traj.rows(), traj.cols() + 1);
  for (std::size_t r = 0; r < traj.rows(); ++r) {
    for (std::size_t c = 0; c < traj.cols(); ++c) out.at(r, c) = traj.at(r, c);
    out.at(r, traj.cols()) = speeds[r];
  }
  return out;
}

Tensor<double> constant_matrix(std::size_t rows, std::size_t cols, double value) {
  return Tensor<double>::matrix(rows, cols, value);
}

// Retained latent targets grouped as term sources.
struct LatentSources {
  std::vector<Tensor<double>> observations;
  std::vector<Tensor<double>> targets;
  std::size_t terms_per_source = 1;
};

LatentSources latent_sources(const LatentTable& latents, const TrainingSet& data, const TrainConfig& cfg) {
  std::map<int, std::size_t> env_index;
  for (std::size_t i = 0; i < data.environments.size(); ++i) env_index[data.environments[i].environment_id] = i;
  std::vector<std::vector<const LatentEntry*>> grouped(data.environments.size());
  for (const auto& e : latents.entries) {
    if (!e.finite) continue;
    auto it = env_index.find(e.environment_id);
    if (it == env_index.end() || e.row >= data.environments[it->second].size()) {
      throw StageOrderError("latent table refers to environment " + std::to_string(e.environment_id) + " row " +
                            std::to_string(e.row) + ", which the training data does not contain");
    }
    if (e.z.size() != cfg.arch.latent_dim) throw StageOrderError("latent table has the wrong latent dimension");
    grouped[it->second].push_back(&e);
  }
  if (cfg.environment_mode == EnvironmentMode::kMinibatch) {
    std::vector<const LatentEntry*> all;
    for (const auto& g : grouped) all.insert(all.end(), g.begin(), g.end());
    grouped = {all};
  }
  LatentSources out;
  if (cfg.environment_mode == EnvironmentMode::kMinibatch) out.terms_per_source = data.environments.size();
  const std::size_t obs_dim = cfg.arch.observation_dim();
  for (const auto& group : grouped) {
    if (group.empty()) continue;
    Tensor<double> obs = Tensor<double>::matrix(group.size(), obs_dim);
    Tensor<double> tgt = Tensor<double>::matrix(group.size(), cfg.arch.latent_dim);
    for (std::size_t i = 0; i < group.size(); ++i) {
      const PreparedBatch& env = data.environments[env_index.at(group[i]->environment_id)];
      for (std::size_t c = 0; c < obs_dim; ++c) obs.at(i, c) = env.observations.at(group[i]->row, c);
      for (std::size_t c = 0; c < cfg.arch.latent_dim; ++c) tgt.at(i, c) = group[i]->z[c];
    }
    out.observations.push_back(std::move(obs));
    out.targets.push_back(std::move(tgt));
  }
  return out;
}

std::vector<std::size_t> source_sizes(const std::vector<PreparedBatch>& sources) {
  std::vector<std::size_t> sizes;
  for (const auto& s : sources) sizes.push_back(s.size());
  return sizes;
}

}  // namespace

// ---------------------------------------------------------------------------

void LossCurve::add(std::size_t step, std::vector<double> row) {
  if (row.size() != columns.size()) throw std::invalid_argument("loss curve: row width differs from columns");
  steps.push_back(step);
  values.push_back(std::move(row));
}

std::string LossCurve::to_csv() const {
  std::string out = "step";
  for (const auto& c : columns) out += "," + c;
  out += "\n";
  for (std::size_t i = 0; i < steps.size(); ++i) {
    out += std::to_string(steps[i]);
    for (double v : values[i]) out += "," + io::format_double(v);
    out += "\n";
  }
  return out;
}

LossCurve LossCurve::from_csv(const std::string& text) {
  LossCurve curve;
  std::istringstream in(text);
  std::string line;
  auto split = [](const std::string& s) {
    std::vector<std::string> parts;
    std::string part;
    std::istringstream ls(s);
    while (std::getline(ls, part, ',')) parts.push_back(part);
    return parts;
  };
  if (!std::getline(in, line)) throw std::invalid_argument("loss curve: empty csv");
  std::vector<std::string> header = split(line);
  if (header.empty() || header[0] != "step") throw std::invalid_argument("loss curve: header must start with step");
  curve.columns.assign(header.begin() + 1, header.end());
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    std::vector<std::string> cells = split(line);
    if (cells.size() != header.size()) {
      throw std::invalid_argument("loss curve: line " + std::to_string(line_no) + " has the wrong width");
    }
    std::size_t step = 0;
    std::vector<double> row(curve.columns.size());
    auto bad = [&] { return std::invalid_argument("loss curve: line " + std::to_string(line_no) + " is malformed"); };
    if (std::from_chars(cells[0].data(), cells[0].data() + cells[0].size(), step).ec != std::errc()) throw bad();
    for (std::size_t i = 0; i < row.size(); ++i) {
      const std::string& c = cells[i + 1];
      if (std::from_chars(c.data(), c.data() + c.size(), row[i]).ec != std::errc()) throw bad();
    }
    curve.add(step, std::move(row));
  }
  return curve;
}

TrainingSet TrainingSet::from(const std::vector<losses::EnvironmentBatch>& batches,
                              const models::ArchitectureConfig& arch) {
  if (batches.empty()) throw std::invalid_argument("training set: no environments");
  TrainingSet set;
  std::vector<std::uint8_t> bytes;
  for (const auto& b : batches) {
    set.environments.push_back(losses::prepare(b, arch));
    const PreparedBatch& p = set.environments.back();
    const double id = static_cast<double>(p.environment_id);
    io::append_f64le(bytes, std::span<const double>(&id, 1));
    io::append_f64le(bytes, p.observations.data());
    io::append_f64le(bytes, p.truths.data());
    io::append_f64le(bytes, p.speeds);
  }
  set.digest = io::sha256_hex(bytes);
  return set;
}

std::size_t TrainingSet::sample_count() const {
  std::size_t n = 0;
  for (const auto& e : environments) n += e.size();
  return n;
}

std::vector<losses::EnvironmentBatch> training_split(const std::vector<losses::EnvironmentBatch>& all) {
  std::vector<losses::EnvironmentBatch> out;
  for (const auto& b : all) {
    if (b.split == "train") out.push_back(b);
  }
  if (out.empty()) throw std::invalid_argument("dataset has no training split");
  return out;
}

PreparedBatch pool(const std::vector<PreparedBatch>& batches) {
  if (batches.empty()) throw std::invalid_argument("pool: no batches");
  std::size_t rows = 0;
  for (const auto& b : batches) rows += b.size();
  const std::size_t obs_dim = batches[0].observations.cols();
  const std::size_t traj_dim = batches[0].truths.cols();
  PreparedBatch out;
  out.environment_id = -1;
  out.observations = Tensor<double>::matrix(rows, obs_dim);
  out.truths = Tensor<double>::matrix(rows, traj_dim);
  std::size_t r = 0;
  for (const auto& b : batches) {
    for (std::size_t i = 0; i < b.size(); ++i, ++r) {
      for (std::size_t c = 0; c < obs_dim; ++c) out.observations.at(r, c) = b.observations.at(i, c);
      for (std::size_t c = 0; c < traj_dim; ++c) out.truths.at(r, c) = b.truths.at(i, c);
      out.speeds.push_back(b.speeds[i]);
    }
  }
  return out;
}

TermSampler::TermSampler(const std::vector<std::size_t>& sizes, std::size_t terms_per_source, std::size_t batch_size,
                         std::uint64_t seed, const std::string& stage)
    : terms_per_source_(terms_per_source), batch_size_(batch_size) {
  for (std::size_t i = 0; i < sizes.size(); ++i) {
    samplers_.emplace_back(sizes[i], Rng::derive(seed, "batches/" + stage, i));
  }
}

std::vector<TermSampler::Term> TermSampler::next() {
  std::vector<Term> terms;
  for (std::size_t s = 0; s < samplers_.size(); ++s) {
    for (std::size_t k = 0; k < terms_per_source_; ++k) terms.push_back({s, samplers_[s].next(batch_size_)});
  }
  return terms;
}

TermSources term_sources(const TrainingSet& data, EnvironmentMode mode) {
  TermSources out;
  if (mode == EnvironmentMode::kLabels) {
    out.sources = data.environments;
  } else {
    out.sources = {pool(data.environments)};
    out.terms_per_source = data.environments.size();
  }
  return out;
}

double lambda_at(const TrainConfig& cfg, std::size_t step, std::size_t total_steps) {
  const auto warm = static_cast<std::size_t>(std::floor(cfg.lambda_warmup_fraction * static_cast<double>(total_steps)));
  return step <= warm ? 0.0 : cfg.risk.lambda_irm;
}

// ---------------------------------------------------------------------------
// Stage 1

Tensor<double> decode_batch(const ParameterSet& w, const Tensor<double>& z, std::span<const double> speeds,
                            const models::ArchitectureConfig& arch) {
  ad::Tape<double> tape;
  ad::Bound<double> wb = ad::bind_constant(tape, w);
  return models::decoder_trajectories(tape, wb, tape.constant(z), speeds, arch).value();
}

GanResult train_decoder_gan(const TrainingSet& data, const TrainConfig& cfg) {
  const auto& arch = cfg.arch;
  GanResult out;
  out.decoder = models::init_decoder(arch, cfg.seed);
  out.critic = models::init_critic(arch, cfg.seed);
  out.curve.columns = {"critic_loss", "wasserstein", "gradient_penalty", "generator_loss"};
  if (cfg.gan_steps == 0) return out;

  const PreparedBatch real_pool = pool(data.environments);
  const Tensor<double> real_inputs = with_speed_column(real_pool.truths, real_pool.speeds);
  EpochSampler sampler(real_pool.size(), Rng::derive(cfg.seed, "batches/decoder_gan"));
  Rng noise = Rng::derive(cfg.seed, "noise/decoder_gan");
  Adam generator_opt(cfg.gan_optimizer, out.decoder.parameter_count());
  Adam critic_opt(cfg.gan_optimizer, out.critic.parameter_count());
  const std::size_t B = cfg.batch_size;

  // z ~ N(0, I), ṽ ~ U[0, v_max].
  auto draw_prior = [&](Tensor<double>& z, std::vector<double>& speeds) {
    z = Tensor<double>::matrix(B, arch.latent_dim);
    for (double& x : z.data()) x = noise.normal();
    speeds.resize(B);
    for (double& v : speeds) v = noise.uniform(0.0, arch.v_max);
  };

  Tensor<double> z;
  std::vector<double> speeds;
  for (std::size_t step = 1; step <= cfg.gan_steps; ++step) {
    losses::CriticLoss critic_loss;
    for (std::size_t k = 0; k < cfg.critic_steps; ++k) {
      const Tensor<double> real = select_rows(real_inputs, sampler.next(B));
      draw_prior(z, speeds);
      const Tensor<double> fake = with_speed_column(decode_batch(out.decoder, z, speeds, arch), speeds);
      std::vector<double> mix(B);
      for (double& m : mix) m = noise.uniform();
      critic_loss = losses::wgan_critic_loss(out.critic, real, fake, cfg.gp_weight, mix, true);
      guard(critic_loss.total, "decoder_gan", step, "critic loss");
      critic_opt.step(out.critic, critic_loss.gradient);
    }
    draw_prior(z, speeds);
    ad::ValueAndGradient g = losses::wgan_generator_step(out.critic, out.decoder, z, speeds, arch);
    guard(g.value, "decoder_gan", step, "generator loss");
    generator_opt.step(out.decoder, g.gradient);
    if (should_log(cfg, step, cfg.gan_steps)) {
      out.curve.add(step, {critic_loss.total, critic_loss.wasserstein, critic_loss.gradient_penalty, g.value});
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Stage 2

std::size_t LatentTable::retained() const {
  std::size_t n = 0;
  for (const auto& e : entries) n += e.finite ? 1 : 0;
  return n;
}

ParameterSet LatentTable::to_parameters(std::size_t latent_dim) const {
  ParameterSet p;
  const std::size_t m = entries.size();
  if (m == 0) return p;
  Tensor<double> z = Tensor<double>::matrix(m, latent_dim);
  Tensor<double> env = Tensor<double>::matrix(m, 1), row = env, initial = env, objective = env, finite = env;
  for (std::size_t i = 0; i < m; ++i) {
    const LatentEntry& e = entries[i];
    if (e.z.size() != latent_dim) throw std::invalid_argument("latent table: inconsistent latent dimension");
    for (std::size_t c = 0; c < latent_dim; ++c) z.at(i, c) = e.z[c];
    env[i] = e.environment_id;
    row[i] = static_cast<double>(e.row);
    initial[i] = e.initial_objective;
    objective[i] = e.objective;
    finite[i] = e.finite ? 1.0 : 0.0;
  }
  p.add("z", std::move(z));
  p.add("environment_id", std::move(env));
  p.add("row", std::move(row));
  p.add("initial_objective", std::move(initial));
  p.add("objective", std::move(objective));
  p.add("finite", std::move(finite));
  return p;
}

LatentTable LatentTable::from_parameters(const ParameterSet& p) {
  LatentTable t;
  if (p.empty()) return t;
  const Tensor<double>& z = p.at("z");
  const std::size_t m = z.rows();
  for (const char* name : {"environment_id", "row", "initial_objective", "objective", "finite"}) {
    if (p.at(name).size() != m) throw std::invalid_argument(std::string("latent table: column ") + name + " has the wrong length");
  }
  for (std::size_t i = 0; i < m; ++i) {
    LatentEntry e;
    e.environment_id = static_cast<int>(p.at("environment_id")[i]);
    e.row = static_cast<std::size_t>(p.at("row")[i]);
    e.z.assign(z.data().begin() + i * z.cols(), z.data().begin() + (i + 1) * z.cols());
    e.initial_objective = p.at("initial_objective")[i];
    e.objective = p.at("objective")[i];
    e.finite = p.at("finite")[i] != 0.0;
    t.entries.push_back(std::move(e));
  }
  return t;
}

LatentEntry infer_latent(const ParameterSet& w0, std::span<const double> truth_flat, double speed,
                         const TrainConfig& cfg, const std::vector<double>& initial) {
  const std::size_t dz = cfg.arch.latent_dim;
  losses::RiskConfig risk = cfg.risk;
  risk.lambda_irm = cfg.latent_penalty_weight;
  LatentEntry e;
  std::vector<double> z = initial.empty() ? std::vector<double>(dz, 0.0) : initial;
  if (z.size() != dz) throw std::invalid_argument("infer_latent: initial latent has the wrong dimension");
  auto finite_terms = [](const losses::LatentTerms& t) {
    if (!std::isfinite(t.objective)) return false;
    for (double g : t.gradient) {
      if (!std::isfinite(g)) return false;
    }
    return true;
  };
  losses::LatentTerms t = losses::latent_terms(z, w0, truth_flat, speed, risk, cfg.arch, cfg.latent_steps > 0);
  if (!finite_terms(t)) {
    e.finite = false;
    e.z = z;
    e.initial_objective = e.objective = t.objective;
    return e;
  }
  e.initial_objective = e.objective = t.objective;
  e.z = z;
  Adam adam(cfg.latent_optimizer, dz);
  for (std::size_t step = 1; step <= cfg.latent_steps; ++step) {
    adam.step(std::span<double>(z), t.gradient);
    // The last iterate needs only its value.
    t = losses::latent_terms(z, w0, truth_flat, speed, risk, cfg.arch, step < cfg.latent_steps);
    if (!finite_terms(t)) {
      e.finite = false;
      return e;
    }
    if (t.objective < e.objective) {
      e.objective = t.objective;
      e.z = z;
    }
  }
  return e;
}

LatentTable infer_latents(const ParameterSet& w0, const TrainingSet& data, const TrainConfig& cfg) {
  if (w0.empty()) throw StageOrderError("latent inference needs a decoder checkpoint");
  models::check_decoder(w0, cfg.arch);
  LatentTable table;
  for (const auto& env : data.environments) {
    std::size_t count = env.size();
    if (cfg.latent_samples_per_env != 0 && cfg.latent_samples_per_env < count) count = cfg.latent_samples_per_env;
    const std::size_t width = env.truths.cols();
    for (std::size_t r = 0; r < count; ++r) {
      std::span<const double> truth(env.truths.data().data() + r * width, width);
      LatentEntry e = infer_latent(w0, truth, env.speeds[r], cfg);
      e.environment_id = env.environment_id;
      e.row = r;
      table.entries.push_back(std::move(e));
    }
  }
  return table;
}

EncoderResult pretrain_encoder(const LatentTable& latents, const TrainingSet& data, const TrainConfig& cfg) {
  if (latents.retained() == 0) {
    throw StageOrderError("encoder pretraining needs a latent table with at least one retained sample");
  }
  // Regression pools every retained sample regardless of environment mode.
  TrainConfig pooled = cfg;
  pooled.environment_mode = EnvironmentMode::kMinibatch;
  LatentSources src = latent_sources(latents, data, pooled);
  const Tensor<double>& obs = src.observations.at(0);
  const Tensor<double>& targets = src.targets.at(0);
  const std::size_t dz = cfg.arch.latent_dim;
  const double per_entry = 1.0 / static_cast<double>(dz);

  EncoderResult out;
  out.encoder = models::init_encoder(cfg.arch, cfg.seed);
  out.curve.columns = {"mse"};
  EpochSampler sampler(obs.rows(), Rng::derive(cfg.seed, "batches/pretrain"));
  Adam adam(cfg.regression_optimizer, out.encoder.parameter_count());
  auto mse_program = [&](const Tensor<double>& x, const Tensor<double>& y) {
    return [&x, &y, per_entry](auto& tape, const auto& theta) {
      auto z = models::encoder_latents(theta, tape.constant(x));
      return losses::mean_weighted_squared_error(tape, z, y, Tensor<double>::matrix(y.rows(), y.cols(), per_entry));
    };
  };
  for (std::size_t step = 1; step <= cfg.regression_steps; ++step) {
    const std::vector<std::size_t> rows = sampler.next(cfg.batch_size);
    const Tensor<double> x = select_rows(obs, rows);
    const Tensor<double> y = select_rows(targets, rows);
    ad::ValueAndGradient g = ad::value_and_gradient(mse_program(x, y), out.encoder);
    guard(g.value, "pretrain", step, "regression loss");
    adam.step(out.encoder, g.gradient);
    if (should_log(cfg, step, cfg.regression_steps)) out.curve.add(step, {g.value});
  }
  out.final_mse = ad::evaluate(mse_program(obs, targets), out.encoder)[0];
  return out;
}

// ---------------------------------------------------------------------------
// Stage 3 and baselines

FinetuneResult finetune_encoder_nirm(const ParameterSet& theta0, const ParameterSet& w0, const TrainingSet& data,
                                     const TrainConfig& cfg) {
  if (w0.empty()) throw StageOrderError("fine-tuning needs a decoder checkpoint");
  if (theta0.empty()) throw StageOrderError("fine-tuning needs an initial encoder checkpoint");
  models::check_decoder(w0, cfg.arch);
  models::check_encoder(theta0, cfg.arch);
  const std::string decoder_before = models::parameter_digest(w0);

  FinetuneResult out;
  out.encoder = theta0;
  out.curve.columns = {"objective", "risk", "penalty"};
  const TermSources src = term_sources(data, cfg.environment_mode);
  TermSampler sampler(source_sizes(src.sources), src.terms_per_source, cfg.batch_size, cfg.seed, "finetune");
  Adam adam(cfg.finetune_optimizer, out.encoder.parameter_count());
  for (std::size_t step = 1; step <= cfg.finetune_steps; ++step) {
    const double lambda = lambda_at(cfg, step, cfg.finetune_steps);
    double objective = 0.0, risk = 0.0, penalty = 0.0;
    ParameterSet grad = out.encoder.zeros_like();
    for (const auto& term : sampler.next()) {
      const PreparedBatch mb = losses::select(src.sources[term.source], term.rows);
      losses::ObjectiveTerms t = losses::nirm_terms(out.encoder, w0, mb, cfg.risk.alpha, lambda, cfg.arch, false);
      objective += t.objective;
      risk += t.risk;
      penalty += t.penalty;
      grad.axpy(1.0, t.grad_theta);
    }
    guard(objective, "finetune", step, "objective");
    adam.step(out.encoder, grad);
    if (should_log(cfg, step, cfg.finetune_steps)) out.curve.add(step, {objective, risk, penalty});
  }
  if (models::parameter_digest(w0) != decoder_before) {
    throw std::logic_error("fine-tuning modified the frozen decoder");
  }
  return out;
}

JointResult train_joint(const TrainingSet& data, const TrainConfig& cfg, double lambda) {
  JointResult out;
  out.encoder = models::init_encoder(cfg.arch, cfg.seed);
  out.decoder = models::init_decoder(cfg.arch, cfg.seed);
  out.curve.columns = {"objective", "risk", "penalty"};
  const TermSources src = term_sources(data, cfg.environment_mode);
  TermSampler sampler(source_sizes(src.sources), src.terms_per_source, cfg.batch_size, cfg.seed, "joint");
  Adam encoder_opt(cfg.finetune_optimizer, out.encoder.parameter_count());
  Adam decoder_opt(cfg.finetune_optimizer, out.decoder.parameter_count());
  TrainConfig schedule = cfg;
  schedule.risk.lambda_irm = lambda;
  for (std::size_t step = 1; step <= cfg.finetune_steps; ++step) {
    const double lam = lambda_at(schedule, step, cfg.finetune_steps);
    double objective = 0.0, risk = 0.0, penalty = 0.0;
    ParameterSet grad_theta = out.encoder.zeros_like();
    ParameterSet grad_w = out.decoder.zeros_like();
    for (const auto& term : sampler.next()) {
      const PreparedBatch mb = losses::select(src.sources[term.source], term.rows);
      losses::ObjectiveTerms t = losses::nirm_terms(out.encoder, out.decoder, mb, cfg.risk.alpha, lam, cfg.arch, true);
      objective += t.objective;
      risk += t.risk;
      penalty += t.penalty;
      grad_theta.axpy(1.0, t.grad_theta);
      grad_w.axpy(1.0, t.grad_w);
    }
    guard(objective, "joint", step, "objective");
    encoder_opt.step(out.encoder, grad_theta);
    decoder_opt.step(out.decoder, grad_w);
    if (should_log(cfg, step, cfg.finetune_steps)) out.curve.add(step, {objective, risk, penalty});
  }
  return out;
}

PointHeadResult train_traj_irm(const TrainingSet& data, const TrainConfig& cfg) {
  const auto& arch = cfg.arch;
  const ParameterSet encoder_layout = models::init_encoder(arch, cfg.seed);
  const ParameterSet head_layout = init_point_head(arch, cfg.seed);
  ParameterSet params = encoder_layout.with_prefix("encoder.").merged(head_layout.with_prefix("head."));

  PointHeadResult out;
  out.curve.columns = {"objective", "risk", "penalty"};
  const TermSources src = term_sources(data, cfg.environment_mode);
  TermSampler sampler(source_sizes(src.sources), src.terms_per_source, cfg.batch_size, cfg.seed, "traj_irm");
  Adam adam(cfg.finetune_optimizer, params.parameter_count());
  for (std::size_t step = 1; step <= cfg.finetune_steps; ++step) {
    const double lambda = lambda_at(cfg, step, cfg.finetune_steps);
    double objective = 0.0, risk = 0.0, penalty = 0.0;
    ParameterSet grad = params.zeros_like();
    for (const auto& term : sampler.next()) {
      const PreparedBatch mb = losses::select(src.sources[term.source], term.rows);
      auto model = [&](auto& tape, const auto& p) {
        return point_head_outputs(p.slice(encoder_layout, 0), p.slice(head_layout, encoder_layout.size()),
                                  tape.constant(mb.observations), arch);
      };
      const Tensor<double> weights = losses::risk_weights(mb.size(), arch.n_points, cfg.risk.alpha);
      losses::IrmTerms t = losses::irmv1_terms(model, params, mb.truths, weights, lambda);
      objective += t.objective;
      risk += t.risk;
      penalty += t.penalty;
      grad.axpy(1.0, t.gradient);
    }
    guard(objective, "traj_irm", step, "objective");
    adam.step(params, grad);
    if (should_log(cfg, step, cfg.finetune_steps)) out.curve.add(step, {objective, risk, penalty});
  }
  out.encoder = params.with_prefix_removed("encoder.");
  out.head = params.with_prefix_removed("head.");
  return out;
}

EncoderResult train_latent_irmv1(const ParameterSet& theta0, const LatentTable& latents, const TrainingSet& data,
                                 const TrainConfig& cfg) {
  if (theta0.empty()) throw StageOrderError("latent IRMv1 regression needs a pretrained encoder checkpoint");
  if (latents.retained() == 0) throw StageOrderError("latent IRMv1 regression needs a latent table");
  models::check_encoder(theta0, cfg.arch);
  const LatentSources src = latent_sources(latents, data, cfg);
  std::vector<std::size_t> sizes;
  for (const auto& o : src.observations) sizes.push_back(o.rows());
  TermSampler sampler(sizes, src.terms_per_source, cfg.batch_size, cfg.seed, "latent_irmv1");
  const double per_entry = 1.0 / static_cast<double>(cfg.arch.latent_dim);

  EncoderResult out;
  out.encoder = theta0;
  out.curve.columns = {"objective", "risk", "penalty"};
  Adam adam(cfg.finetune_optimizer, out.encoder.parameter_count());
  for (std::size_t step = 1; step <= cfg.finetune_steps; ++step) {
    const double lambda = lambda_at(cfg, step, cfg.finetune_steps);
    double objective = 0.0, risk = 0.0, penalty = 0.0;
    ParameterSet grad = out.encoder.zeros_like();
    for (const auto& term : sampler.next()) {
      const Tensor<double> x = select_rows(src.observations[term.source], term.rows);
      const Tensor<double> y = select_rows(src.targets[term.source], term.rows);
      auto model = [&](auto& tape, const auto& theta) { return models::encoder_latents(theta, tape.constant(x)); };
      losses::IrmTerms t =
          losses::irmv1_terms(model, out.encoder, y, constant_matrix(y.rows(), y.cols(), per_entry), lambda);
      objective += t.objective;
      risk += t.risk;
      penalty += t.penalty;
      grad.axpy(1.0, t.gradient);
    }
    guard(objective, "latent_irmv1", step, "objective");
    adam.step(out.encoder, grad);
    if (should_log(cfg, step, cfg.finetune_steps)) out.curve.add(step, {objective, risk, penalty});
  }
  out.final_mse = out.curve.size() > 0 ? out.curve.values.back()[1] : 0.0;
  return out;
}

}  // namespace nirm::pipelines
