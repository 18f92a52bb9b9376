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

#include "nirm/eval/eval.hpp"

#include <charconv>
#include <cmath>
#include <map>
#include <sstream>
#include <stdexcept>

#include "nirm/core/io.hpp"
#include "nirm/models/checkpoint.hpp"
#include "nirm/synthdata/dataset.hpp"

namespace nirm::eval {

using json_util::json;
using json_util::ObjectReader;

double ade(std::span<const double> predicted_flat, std::span<const double> truth_flat) {
  if (predicted_flat.size() != truth_flat.size() || truth_flat.size() % 2 != 0 || truth_flat.empty()) {
    throw std::invalid_argument("ade: " + std::to_string(predicted_flat.size()) + " vs " +
                                std::to_string(truth_flat.size()) + " values");
  }
  double total = 0.0;
  for (std::size_t k = 0; k < truth_flat.size(); k += 2) {
    total += std::hypot(predicted_flat[k] - truth_flat[k], predicted_flat[k + 1] - truth_flat[k + 1]);
  }
  return total / static_cast<double>(truth_flat.size() / 2);
}

double ade(const models::Trajectory& predicted, const models::Trajectory& truth) {
  if (predicted.points.size() != truth.points.size()) {
    throw std::invalid_argument("ade: " + std::to_string(predicted.points.size()) + " vs " +
                                std::to_string(truth.points.size()) + " points");
  }
  for (std::size_t k = 0; k < truth.points.size(); ++k) {
    if (std::abs(predicted.points[k].query_time - truth.points[k].query_time) > 1e-9) {
      throw std::invalid_argument("ade: time grids differ at point " + std::to_string(k));
    }
  }
  return ade(predicted.flatten(), truth.flatten());
}

namespace {

/// UTF-8 code points, enough to align ✓ with ASCII.
std::size_t display_width(const std::string& s) {
  std::size_t n = 0;
  for (unsigned char c : s) n += (c & 0xC0) != 0x80;
  return n;
}

std::string aligned(const std::vector<std::vector<std::string>>& rows, std::size_t text_columns = 1) {
  std::vector<std::size_t> width;
  for (const auto& r : rows) {
    width.resize(std::max(width.size(), r.size()), 0);
    for (std::size_t i = 0; i < r.size(); ++i) width[i] = std::max(width[i], display_width(r[i]));
  }
  std::string out;
  for (std::size_t j = 0; j < rows.size(); ++j) {
    std::string line;
    for (std::size_t i = 0; i < rows[j].size(); ++i) {
      if (i > 0) line += "  ";
      const std::string& cell = rows[j][i];
      const std::string pad(width[i] - display_width(cell), ' ');
      // Text left, numbers right.
      line += i < text_columns ? cell + pad : pad + cell;
    }
    while (!line.empty() && line.back() == ' ') line.pop_back();
    out += line + "\n";
    if (j == 0) {
      std::size_t total = 0;
      for (std::size_t w : width) total += w;
      out += std::string(total + 2 * (width.size() - 1), '-') + "\n";
    }
  }
  return out;
}

std::vector<std::string> split_csv_line(const std::string& s) {
  std::vector<std::string> parts;
  std::string part;
  std::istringstream ls(s);
  while (std::getline(ls, part, ',')) parts.push_back(part);
  if (!s.empty() && s.back() == ',') parts.emplace_back();
  return parts;
}

double parse_double(const std::string& s, const std::string& where) {
  double v = 0.0;
  if (std::from_chars(s.data(), s.data() + s.size(), v).ec != std::errc()) {
    throw std::invalid_argument(where + ": not a number: '" + s + "'");
  }
  return v;
}

}  // namespace

// ---------------------------------------------------------------------------
// EvalReport

json EvalReport::to_json() const {
  json envs = json::array();
  for (const auto& e : environments) {
    envs.push_back(json{
        {"environment_id", e.environment_id}, {"split", e.split}, {"samples", e.samples}, {"ade", e.ade}, {"risk", e.risk}});
  }
  return json{{"schema_version", kReportSchemaVersion},
              {"kind", "nirm-eval"},
              {"variant", variant},
              {"seed", seed},
              {"checkpoint", checkpoint},
              {"checkpoint_sha256", checkpoint_sha256},
              {"split", split},
              {"alpha", alpha},
              {"environments", envs},
              {"total", json{{"samples", total_samples}, {"ade", ade}, {"risk", risk}}}};
}

EvalReport EvalReport::from_json(const json& j, const std::string& path) {
  ObjectReader r(j, path);
  int version = 0;
  std::string kind;
  r.required("schema_version", version);
  if (version != kReportSchemaVersion) {
    throw json_util::ConfigError(r.field("schema_version") + ": version " + std::to_string(version) +
                                 " is not supported");
  }
  r.required("kind", kind);
  if (kind != "nirm-eval") throw json_util::ConfigError(r.field("kind") + ": expected nirm-eval");
  EvalReport rep;
  r.required("variant", rep.variant);
  r.required("seed", rep.seed);
  r.required("checkpoint", rep.checkpoint);
  r.required("checkpoint_sha256", rep.checkpoint_sha256);
  r.required("split", rep.split);
  r.required("alpha", rep.alpha);
  const json* envs = r.child("environments");
  if (envs == nullptr || !envs->is_array()) throw json_util::ConfigError(r.field("environments") + ": expected an array");
  for (std::size_t i = 0; i < envs->size(); ++i) {
    ObjectReader er((*envs)[i], r.field("environments") + "[" + std::to_string(i) + "]");
    EnvironmentResult e;
    er.required("environment_id", e.environment_id);
    er.required("split", e.split);
    er.required("samples", e.samples);
    er.required("ade", e.ade);
    er.required("risk", e.risk);
    er.finish();
    rep.environments.push_back(e);
  }
  const json* total = r.child("total");
  if (total == nullptr) throw json_util::ConfigError(r.field("total") + ": missing required field");
  ObjectReader tr(*total, r.field("total"));
  tr.required("samples", rep.total_samples);
  tr.required("ade", rep.ade);
  tr.required("risk", rep.risk);
  tr.finish();
  r.finish();
  return rep;
}

std::string EvalReport::to_csv() const {
  std::string out = "environment_id,split,samples,ade_m,risk\n";
  for (const auto& e : environments) {
    out += std::to_string(e.environment_id) + "," + e.split + "," + std::to_string(e.samples) + "," +
           io::format_double(e.ade) + "," + io::format_double(e.risk) + "\n";
  }
  out += "all," + split + "," + std::to_string(total_samples) + "," + io::format_double(ade) + "," +
         io::format_double(risk) + "\n";
  return out;
}

std::string EvalReport::to_text() const {
  std::string out = "variant " + variant + ", seed " + std::to_string(seed) + ", split " + split + "\n";
  out += "checkpoint " + checkpoint + " (sha256 " + checkpoint_sha256 + ")\n\n";
  std::vector<std::vector<std::string>> rows{{"environment", "samples", "ADE (m)", "risk"}};
  for (const auto& e : environments) {
    rows.push_back({std::to_string(e.environment_id) + " (" + e.split + ")", std::to_string(e.samples),
                    io::format_fixed(e.ade, 3), io::format_fixed(e.risk, 2)});
  }
  rows.push_back({"all", std::to_string(total_samples), io::format_fixed(ade, 3), io::format_fixed(risk, 2)});
  return out + aligned(rows);
}

// ---------------------------------------------------------------------------
// Evaluation

Predictor model_predictor(const pipelines::TrainedModel& model, const models::ArchitectureConfig& arch) {
  return [model, arch](const losses::PreparedBatch& b) {
    return pipelines::predict(model, b.observations, b.speeds, arch);
  };
}

EvalReport evaluate(const Predictor& predictor, const std::vector<losses::EnvironmentBatch>& batches,
                    const models::ArchitectureConfig& arch, double alpha) {
  if (batches.empty()) throw std::invalid_argument("evaluate: no batches");
  EvalReport rep;
  rep.alpha = alpha;
  std::map<int, std::size_t> slot;
  struct Sums {
    double ade = 0.0, risk = 0.0;
  };
  std::vector<Sums> sums;
  for (const auto& batch : batches) {
    const losses::PreparedBatch prepared = losses::prepare(batch, arch);
    const ad::Tensor<double> pred = predictor(prepared);
    const std::size_t width = prepared.truths.cols();
    if (pred.rows() != prepared.size() || pred.cols() != width) {
      throw std::invalid_argument("evaluate: predictor returned the wrong shape");
    }
    auto [it, inserted] = slot.try_emplace(batch.environment_id, rep.environments.size());
    if (inserted) {
      rep.environments.push_back({batch.environment_id, batch.split, 0, 0.0, 0.0});
      sums.emplace_back();
    } else if (rep.environments[it->second].split != batch.split) {
      rep.environments[it->second].split += "+" + batch.split;
    }
    EnvironmentResult& env = rep.environments[it->second];
    Sums& s = sums[it->second];
    // Fixed-order sequential sums keep the report bit-reproducible.
    for (std::size_t r = 0; r < prepared.size(); ++r) {
      std::span<const double> p(pred.data().data() + r * width, width);
      std::span<const double> t(prepared.truths.data().data() + r * width, width);
      s.ade += ade(p, t);
      double risk = 0.0;
      for (std::size_t k = 0; k < width; k += 2) {
        const double dl = p[k] - t[k], dt = p[k + 1] - t[k + 1];
        risk += dl * dl + alpha * dt * dt;
      }
      s.risk += risk;
    }
    env.samples += prepared.size();
  }
  double ade_total = 0.0, risk_total = 0.0;
  for (std::size_t i = 0; i < rep.environments.size(); ++i) {
    EnvironmentResult& env = rep.environments[i];
    const double n = static_cast<double>(env.samples);
    env.ade = sums[i].ade / n;
    env.risk = sums[i].risk / n;
    rep.total_samples += env.samples;
    ade_total += n * env.ade;
    risk_total += n * env.risk;
  }
  rep.ade = ade_total / static_cast<double>(rep.total_samples);
  rep.risk = risk_total / static_cast<double>(rep.total_samples);
  rep.split = batches.front().split;
  for (const auto& b : batches) {
    if (b.split != batches.front().split) {
      rep.split = "mixed";
      break;
    }
  }
  return rep;
}

EvalReport evaluate_checkpoint(const std::filesystem::path& checkpoint, const std::filesystem::path& manifest,
                               const std::string& split, double alpha) {
  if (split != "train" && split != "id" && split != "ood") {
    throw std::invalid_argument("evaluate: unknown split '" + split + "' (expected train, id or ood)");
  }
  const models::Checkpoint ck = models::load_checkpoint(checkpoint);
  const pipelines::TrainedModel model = pipelines::TrainedModel::from_merged(ck.params, ck.arch);
  const synthdata::DatasetManifest m = synthdata::read_manifest(manifest);
  synthdata::check_compatible(m.config, ck.arch);
  const std::vector<losses::EnvironmentBatch> batches = synthdata::load_split(manifest, split);
  if (batches.empty()) throw std::invalid_argument("evaluate: dataset has no '" + split + "' split");
  EvalReport rep = evaluate(model_predictor(model, ck.arch), batches, ck.arch, alpha);
  rep.variant = ck.variant;
  rep.seed = ck.seed;
  // The file name and hash identify the checkpoint independently of where it lives.
  rep.checkpoint = checkpoint.filename().string();
  rep.checkpoint_sha256 = io::sha256_file(checkpoint);
  rep.split = split;
  return rep;
}

// ---------------------------------------------------------------------------
// Ablation table

const AblationRow& AblationTable::row(pipelines::Variant v) const {
  for (const auto& r : rows) {
    if (r.variant == v) return r;
  }
  throw std::out_of_range("ablation table has no row for " + pipelines::to_string(v));
}

namespace {

void mean_std(const std::vector<double>& xs, double& mean, double& sd) {
  mean = 0.0;
  for (double x : xs) mean += x;
  mean /= static_cast<double>(xs.size());
  sd = 0.0;
  if (xs.size() < 2) return;
  for (double x : xs) sd += (x - mean) * (x - mean);
  sd = std::sqrt(sd / static_cast<double>(xs.size() - 1));
}

}  // namespace

AblationTable ablation_table(const std::vector<RunScores>& runs) {
  AblationTable table;
  for (pipelines::Variant v : pipelines::all_variants()) {
    AblationRow row;
    row.variant = v;
    std::vector<double> id, ood;
    for (const auto& r : runs) {
      if (r.variant != v) continue;
      row.seeds.push_back(r.seed);
      id.push_back(r.in_domain.ade);
      ood.push_back(r.ood.ade);
    }
    row.present = !row.seeds.empty();
    if (row.present) {
      mean_std(id, row.id_ade, row.id_ade_std);
      mean_std(ood, row.ood_ade, row.ood_ade_std);
    }
    table.rows.push_back(std::move(row));
  }
  return table;
}

std::string AblationTable::to_csv() const {
  std::string out = "variant,dfx,dpt,irm,status,seeds,id_ade_m,id_ade_std,ood_ade_m,ood_ade_std\n";
  for (const auto& r : rows) {
    const pipelines::VariantFlags f = pipelines::variant_flags(r.variant);
    out += pipelines::to_string(r.variant) + "," + (f.decoder_fixed ? "yes" : "") + "," +
           (f.decoder_pretrained ? "yes" : "") + "," + f.irm + ",";
    if (!r.present) {
      out += "absent,,,,,\n";
      continue;
    }
    std::string seeds;
    for (std::size_t i = 0; i < r.seeds.size(); ++i) seeds += (i ? ";" : "") + std::to_string(r.seeds[i]);
    out += "ok," + seeds + "," + io::format_double(r.id_ade) + "," + io::format_double(r.id_ade_std) + "," +
           io::format_double(r.ood_ade) + "," + io::format_double(r.ood_ade_std) + "\n";
  }
  return out;
}

AblationTable AblationTable::from_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || split_csv_line(line).size() != 10) {
    throw std::invalid_argument("ablation csv: bad header");
  }
  AblationTable table;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string where = "ablation csv line " + std::to_string(line_no);
    const std::vector<std::string> c = split_csv_line(line);
    if (c.size() != 10) throw std::invalid_argument(where + ": expected 10 cells");
    AblationRow r;
    r.variant = pipelines::variant_from_string(c[0]);
    r.present = c[4] == "ok";
    if (r.present) {
      std::istringstream seeds(c[5]);
      std::string s;
      while (std::getline(seeds, s, ';')) r.seeds.push_back(static_cast<std::uint64_t>(parse_double(s, where)));
      r.id_ade = parse_double(c[6], where);
      r.id_ade_std = parse_double(c[7], where);
      r.ood_ade = parse_double(c[8], where);
      r.ood_ade_std = parse_double(c[9], where);
    }
    table.rows.push_back(std::move(r));
  }
  return table;
}

std::string AblationTable::to_text() const {
  std::vector<std::vector<std::string>> cells{
      {"Method", "DFX", "DPT", "IRM", "seeds", "In-domain ADE (m)", "OOD ADE (m)"}};
  auto pm = [](double m, double s) { return io::format_fixed(m, 3) + " ± " + io::format_fixed(s, 3); };
  for (const auto& r : rows) {
    const pipelines::VariantFlags f = pipelines::variant_flags(r.variant);
    std::vector<std::string> row{pipelines::to_string(r.variant), f.decoder_fixed ? "✓" : "",
                                 f.decoder_pretrained ? "✓" : "", f.irm.empty() ? "" : f.irm};
    if (r.present) {
      row.push_back(std::to_string(r.seeds.size()));
      row.push_back(pm(r.id_ade, r.id_ade_std));
      row.push_back(pm(r.ood_ade, r.ood_ade_std));
    } else {
      row.insert(row.end(), {"0", "absent", "absent"});
    }
    cells.push_back(std::move(row));
  }
  return aligned(cells, 4);
}

}  // namespace nirm::eval
