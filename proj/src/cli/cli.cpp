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

#include "nirm/cli/cli.hpp"

#include <cstdlib>
#include <ostream>
#include <stdexcept>

#include "CLI11.hpp"
#include "nirm/core/io.hpp"
#include "nirm/eval/eval.hpp"
#include "nirm/eval/plots.hpp"
#include "nirm/models/checkpoint.hpp"
#include "nirm/pipelines/run.hpp"

namespace nirm::cli {

namespace fs = std::filesystem;
using json_util::ConfigError;
using json_util::json;
using json_util::ObjectReader;

namespace {

fs::path resolve(const std::string& p, const fs::path& base) {
  const fs::path q(p);
  return (q.is_absolute() ? q : base / q).lexically_normal();
}

/// A nested seed must match the top-level one.
void check_seed(const json& section, const std::string& name, std::uint64_t seed) {
  if (section.is_object() && section.contains("seed") &&
      !(section.at("seed").is_number_unsigned() && section.at("seed").get<std::uint64_t>() == seed)) {
    throw ConfigError(name + ".seed: must equal the top-level seed " + std::to_string(seed) + " or be omitted");
  }
}

}  // namespace

json ExperimentConfig::to_json() const {
  json j{{"schema_version", kExperimentSchemaVersion},
         {"seed", seed},
         {"dataset", synthdata::to_json(dataset)},
         {"train", pipelines::to_json(train)}};
  if (!manifest.empty()) j["manifest"] = manifest;
  if (!output_dir.empty()) j["output_dir"] = output_dir;
  return j;
}

ExperimentConfig ExperimentConfig::from_json(const json& j, const fs::path& base_dir) {
  ObjectReader r(j, "");
  int version = 0;
  r.required("schema_version", version);
  if (version != kExperimentSchemaVersion) {
    throw ConfigError("schema_version: " + std::to_string(version) + " is not supported (expected " +
                      std::to_string(kExperimentSchemaVersion) + ")");
  }
  ExperimentConfig c;
  r.optional("seed", c.seed);
  if (const json* d = r.child("dataset")) {
    check_seed(*d, "dataset", c.seed);
    c.dataset = synthdata::dataset_config_from_json(*d, "dataset");
  } else {
    c.dataset = synthdata::DatasetConfig::benchmark(c.seed);
  }
  if (const json* t = r.child("train")) {
    check_seed(*t, "train", c.seed);
    c.train = pipelines::train_config_from_json(*t, "train");
  }
  r.optional("manifest", c.manifest);
  r.optional("output_dir", c.output_dir);
  r.finish();
  if (!c.manifest.empty()) c.manifest = resolve(c.manifest, base_dir).string();
  if (!c.output_dir.empty()) c.output_dir = resolve(c.output_dir, base_dir).string();
  c.set_seed(c.seed);
  return c;
}

void ExperimentConfig::set_seed(std::uint64_t s) {
  seed = s;
  dataset.seed = s;
  train.seed = s;
}

ExperimentConfig load_experiment(const fs::path& path) {
  const json j = json_util::parse(io::read_text(path), path.string());
  try {
    return ExperimentConfig::from_json(j, fs::absolute(path).parent_path());
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

namespace {

/// Bad flags or configuration: exit status 2.
class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class Context {
 public:
  Context(std::ostream& out, std::ostream& err) : out_(out), err_(err) {}
  std::ostream& out() { return out_; }
  void log(const std::string& line) { err_ << "[nirm] " << line << "\n"; }

 private:
  std::ostream& out_;
  std::ostream& err_;
};

fs::path output_dir(const std::string& flag, const ExperimentConfig& cfg, const fs::path& default_leaf) {
  if (!flag.empty()) return flag;
  if (!cfg.output_dir.empty()) return cfg.output_dir;
  if (const char* root = std::getenv(kOutputRootVariable); root != nullptr && *root != '\0') {
    return fs::path(root) / default_leaf;
  }
  throw UsageError(std::string("no output directory: pass --out, set output_dir in the config, or set ") +
                   kOutputRootVariable);
}

ExperimentConfig experiment_from_flags(const std::string& config_path, const std::optional<std::uint64_t>& seed) {
  ExperimentConfig cfg = config_path.empty() ? ExperimentConfig{} : load_experiment(config_path);
  if (seed) cfg.set_seed(*seed);
  return cfg;
}

void write_report_files(const eval::EvalReport& rep, const fs::path& dir, const std::string& stem) {
  io::write_text(dir / (stem + ".json"), rep.to_json().dump(2) + "\n");
  io::write_text(dir / (stem + ".csv"), rep.to_csv());
  io::write_text(dir / (stem + ".txt"), rep.to_text());
}

// ---------------------------------------------------------------------------

struct SynthArgs {
  std::string config, out;
  std::optional<std::uint64_t> seed;
};

int synth_data(Context& ctx, const SynthArgs& a) {
  const ExperimentConfig cfg = experiment_from_flags(a.config, a.seed);
  const fs::path out = output_dir(a.out, cfg, "data");
  ctx.log("effective dataset config: " + synthdata::to_json(cfg.dataset).dump());
  const synthdata::DatasetManifest m = synthdata::make_dataset(cfg.dataset, out);
  const fs::path manifest = out / "manifest.json";
  synthdata::load_dataset(manifest);  // verify what was written
  ctx.log("wrote " + std::to_string(m.files.size()) + " data files");
  ctx.out() << manifest.string() << "\n";
  return 0;
}

struct TrainArgs {
  std::string config, data, out, variant;
  std::optional<std::uint64_t> seed;
};

int train(Context& ctx, const TrainArgs& a) {
  ExperimentConfig cfg = experiment_from_flags(a.config, a.seed);
  if (!a.variant.empty()) {
    try {
      cfg.train.variant = pipelines::variant_from_string(a.variant);
    } catch (const std::invalid_argument& e) {
      throw UsageError(std::string("--variant: ") + e.what());
    }
  }
  if (!a.data.empty()) cfg.manifest = fs::absolute(a.data).lexically_normal().string();
  if (cfg.manifest.empty()) throw UsageError("no dataset: pass --data or set manifest in the config");
  const fs::path out = output_dir(a.out, cfg, fs::path("runs") / (pipelines::to_string(cfg.train.variant) + "-seed" +
                                                                   std::to_string(cfg.seed)));
  cfg.output_dir = fs::absolute(out).lexically_normal().string();

  const synthdata::DatasetManifest manifest = synthdata::read_manifest(cfg.manifest);
  synthdata::check_compatible(manifest.config, cfg.train.arch);
  const std::vector<losses::EnvironmentBatch> all = synthdata::load_dataset(cfg.manifest);
  const std::vector<losses::EnvironmentBatch> train_split = pipelines::training_split(all);
  if (train_split.empty()) throw UsageError(cfg.manifest + ": dataset has no training split");
  const pipelines::TrainingSet data = pipelines::TrainingSet::from(train_split, cfg.train.arch);

  const json effective = cfg.to_json();
  ctx.log("effective config: " + effective.dump());
  fs::create_directories(out);
  io::write_text(out / "experiment.json", effective.dump(2) + "\n");

  const pipelines::DataReference ref{cfg.manifest, io::sha256_file(cfg.manifest)};
  const pipelines::RunResult result = pipelines::run_training(data, cfg.train, ref, out);
  for (std::size_t i = 0; i < result.run.stages.size(); ++i) {
    ctx.log("stage " + result.run.stages[i].name + (result.run.reused[i] ? ": reused" : ": trained"));
  }
  pipelines::verify_run_record(result.record_path);
  ctx.out() << result.record_path.string() << "\n";
  return 0;
}

struct EvalArgs {
  std::string checkpoint, data, split = "ood", out;
  double alpha = 5.0;
  std::vector<std::size_t> overlay_rows;
};

int evaluate(Context& ctx, const EvalArgs& a) {
  const fs::path out = output_dir(a.out, ExperimentConfig{}, "eval");
  const eval::EvalReport rep = eval::evaluate_checkpoint(a.checkpoint, a.data, a.split, a.alpha);
  fs::create_directories(out);
  write_report_files(rep, out, "eval-" + a.split);
  if (!a.overlay_rows.empty()) {
    const models::Checkpoint ck = models::load_checkpoint(a.checkpoint);
    const auto predictor =
        eval::model_predictor(pipelines::TrainedModel::from_merged(ck.params, ck.arch), ck.arch);
    std::vector<eval::OverlaySample> samples;
    for (const auto& batch : synthdata::load_split(a.data, a.split)) {
      const auto s = eval::overlay_samples(predictor, batch, a.overlay_rows, ck.arch);
      samples.insert(samples.end(), s.begin(), s.end());
    }
    io::write_text(out / ("overlay-" + a.split + ".svg"),
                   eval::trajectory_overlay_svg(samples, rep.variant + " seed " + std::to_string(rep.seed) + ", " +
                                                             a.split + " split"));
  }
  ctx.out() << rep.to_text();
  return 0;
}

struct ReportArgs {
  std::vector<std::string> runs;
  std::string out, data;
  double alpha = 5.0;
};

int report(Context& ctx, const ReportArgs& a) {
  const fs::path out = output_dir(a.out, ExperimentConfig{}, "report");
  std::vector<eval::RunScores> scores;
  for (std::size_t i = 0; i < a.runs.size(); ++i) {
    const fs::path run_dir = a.runs[i];
    const json record = pipelines::verify_run_record(run_dir / "run.json");
    const fs::path manifest = a.data.empty() ? fs::path(record.at("data").at("manifest").get<std::string>()) : fs::path(a.data);
    if (a.data.empty() && io::sha256_file(manifest) != record.at("data").at("manifest_sha256").get<std::string>()) {
      throw io::IntegrityError(manifest.string() + ": dataset manifest differs from the one the run was trained on");
    }
    const fs::path checkpoint = run_dir / record.at("model").at("path").get<std::string>();
    eval::RunScores s;
    s.variant = pipelines::variant_from_string(record.at("variant").get<std::string>());
    s.seed = record.at("seed").get<std::uint64_t>();
    s.in_domain = eval::evaluate_checkpoint(checkpoint, manifest, "id", a.alpha);
    s.ood = eval::evaluate_checkpoint(checkpoint, manifest, "ood", a.alpha);
    const fs::path dir = out / "runs" / (std::to_string(i) + "-" + pipelines::to_string(s.variant) + "-seed" +
                                         std::to_string(s.seed));
    fs::create_directories(dir);
    write_report_files(s.in_domain, dir, "eval-id");
    write_report_files(s.ood, dir, "eval-ood");
    ctx.log(run_dir.string() + ": id " + io::format_fixed(s.in_domain.ade, 3) + " m, ood " +
            io::format_fixed(s.ood.ade, 3) + " m");
    scores.push_back(std::move(s));
  }
  const eval::AblationTable table = eval::ablation_table(scores);
  io::write_text(out / "ablation.csv", table.to_csv());
  io::write_text(out / "ablation.txt", table.to_text());
  io::write_text(out / "ablation.svg", eval::ablation_bar_chart_svg(table));
  ctx.out() << table.to_text();
  return 0;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Trajectory generation with non-linear invariant risk minimisation"};
  app.require_subcommand(1);

  SynthArgs synth;
  auto* s = app.add_subcommand("synth-data", "Write a synthetic dataset and its manifest");
  s->add_option("--config", synth.config, "Experiment config (JSON); the benchmark dataset if omitted");
  s->add_option("--out", synth.out, "Output directory");
  s->add_option("--seed", synth.seed, "Override the config seed");

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "Train one variant, resuming completed stages");
  t->add_option("--variant", tr.variant, "ours, e2e_nt, e2e_nt_nirm, random_nt_nirm, traj_irm or latent_irmv1");
  t->add_option("--config", tr.config, "Experiment config (JSON)");
  t->add_option("--data", tr.data, "Dataset manifest");
  t->add_option("--out", tr.out, "Run directory");
  t->add_option("--seed", tr.seed, "Override the config seed");

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "Evaluate a checkpoint on one dataset split");
  e->add_option("--checkpoint", ev.checkpoint, "Model checkpoint manifest")->required();
  e->add_option("--data", ev.data, "Dataset manifest")->required();
  e->add_option("--split", ev.split, "train, id or ood")->check(CLI::IsMember({"train", "id", "ood"}));
  e->add_option("--out", ev.out, "Output directory");
  e->add_option("--alpha", ev.alpha, "Lateral weight of the reported risk");
  e->add_option("--overlay-rows", ev.overlay_rows, "Rows to draw in an SVG overlay, per environment")->delimiter(',');

  ReportArgs rp;
  auto* r = app.add_subcommand("report", "Ablation table and bar chart from run directories");
  r->add_option("--runs", rp.runs, "Run directories")->required()->expected(1, -1);
  r->add_option("--out", rp.out, "Output directory");
  r->add_option("--data", rp.data, "Dataset manifest instead of the one recorded by each run");
  r->add_option("--alpha", rp.alpha, "Lateral weight of the reported risk");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& ex) {
    const int code = app.exit(ex, out, err);
    return code == 0 ? 0 : 2;
  }

  Context ctx(out, err);
  try {
    if (s->parsed()) return synth_data(ctx, synth);
    if (t->parsed()) return train(ctx, tr);
    if (e->parsed()) return evaluate(ctx, ev);
    return report(ctx, rp);
  } catch (const std::invalid_argument& ex) {
    // Covers ConfigError, UsageError and architecture/data mismatches.
    err << "nirm: error: " << ex.what() << "\n";
    return 2;
  } catch (const std::exception& ex) {
    err << "nirm: failed: " << ex.what() << "\n";
    return 1;
  }
}

}  // namespace nirm::cli
