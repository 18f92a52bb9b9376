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

#include <cstdlib>
#include <boost/property_tree/ptree.hpp>
#include <boost/property_tree/xml_parser.hpp>
#include <set>
#include <sstream>

#include "doctest.h"
#include "nirm/cli/cli.hpp"
#include "nirm/core/io.hpp"
#include "nirm/eval/eval.hpp"
#include "nirm/models/checkpoint.hpp"
#include "support/tempdir.hpp"

namespace cli = nirm::cli;
namespace ev = nirm::eval;
namespace fs = std::filesystem;
namespace io = nirm::io;
using nirm::json_util::json;
using nirm::testing::TempDir;

namespace {

const fs::path kGolden = NIRM_GOLDEN_DIR;

struct Result {
  int code = 0;
  std::string out, err;
};

Result run_cli(const std::vector<std::string>& args) {
  std::vector<const char*> argv{"nirm"};
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string golden_config() { return (kGolden / "experiment.json").string(); }

/// Golden dataset written once per test binary.
const fs::path& golden_data() {
  static TempDir dir("cli-data");
  static const fs::path manifest = [] {
    const Result r = run_cli({"synth-data", "--config", golden_config(), "--out", (dir.path() / "data").string()});
    REQUIRE(r.code == 0);
    return dir.path() / "data" / "manifest.json";
  }();
  return manifest;
}

/// Writes a modified copy of the golden experiment.
fs::path edited_config(const fs::path& dir, const std::function<void(json&)>& edit) {
  json j = json::parse(io::read_text(kGolden / "experiment.json"));
  edit(j);
  const fs::path p = dir / "experiment.json";
  io::write_text(p, j.dump(2));
  return p;
}

std::set<std::string> checkpoint_roles(const fs::path& run_dir) {
  std::set<std::string> roles;
  for (const auto& entry : fs::directory_iterator(run_dir)) {
    if (entry.path().extension() != ".json") continue;
    const json j = json::parse(io::read_text(entry.path()));
    if (j.value("kind", "") == "nirm-checkpoint") roles.insert(j.at("role").get<std::string>());
  }
  return roles;
}

class ScopedEnv {
 public:
  ScopedEnv(const char* name, const std::string& value) : name_(name) { ::setenv(name, value.c_str(), 1); }
  ~ScopedEnv() { ::unsetenv(name_); }

 private:
  const char* name_;
};

}  // namespace

// ---------------------------------------------------------------------------
// Configuration

TEST_CASE("experiment configs are strict and schema-versioned") {
  TempDir dir("cli-config");
  const cli::ExperimentConfig base = cli::load_experiment(golden_config());
  CHECK(base.seed == 0);
  CHECK(base.train.variant == nirm::pipelines::Variant::kOurs);
  CHECK(base.dataset.environments.size() == 3);
  CHECK(cli::ExperimentConfig::from_json(base.to_json(), dir.path()).to_json() == base.to_json());

  SUBCASE("unknown key") {
    const auto p = edited_config(dir.path(), [](json& j) { j["train"]["finetune_stepz"] = 1; });
    CHECK_THROWS_WITH_AS(cli::load_experiment(p), doctest::Contains("train.finetune_stepz"),
                         nirm::json_util::ConfigError);
  }
  SUBCASE("schema version") {
    const auto p = edited_config(dir.path(), [](json& j) { j["schema_version"] = 2; });
    CHECK_THROWS_WITH_AS(cli::load_experiment(p), doctest::Contains("schema_version"), nirm::json_util::ConfigError);
  }
  SUBCASE("conflicting nested seed") {
    const auto p = edited_config(dir.path(), [](json& j) { j["train"]["seed"] = 4; });
    CHECK_THROWS_WITH_AS(cli::load_experiment(p), doctest::Contains("train.seed"), nirm::json_util::ConfigError);
  }
  SUBCASE("one seed drives everything") {
    const auto p = edited_config(dir.path(), [](json& j) { j["seed"] = 7; });
    const cli::ExperimentConfig c = cli::load_experiment(p);
    CHECK(c.dataset.seed == 7);
    CHECK(c.train.seed == 7);
  }
  SUBCASE("relative paths resolve against the config file") {
    const auto p = edited_config(dir.path(), [](json& j) { j["manifest"] = "data/manifest.json"; });
    CHECK(fs::path(cli::load_experiment(p).manifest) == (dir.path() / "data" / "manifest.json").lexically_normal());
  }
}

// ---------------------------------------------------------------------------
// synth-data

TEST_CASE("synth-data is reproducible and creates missing directories") {
  TempDir dir("cli-synth");
  const fs::path a = dir.path() / "nested" / "a", b = dir.path() / "b";
  const Result ra = run_cli({"synth-data", "--config", golden_config(), "--out", a.string()});
  const Result rb = run_cli({"synth-data", "--config", golden_config(), "--out", b.string()});
  REQUIRE(ra.code == 0);
  REQUIRE(rb.code == 0);
  CHECK(ra.out == (a / "manifest.json").string() + "\n");
  CHECK(io::read_text(a / "manifest.json") == io::read_text(b / "manifest.json"));
  for (const auto& entry : fs::directory_iterator(a)) {
    CHECK(io::sha256_file(entry.path()) == io::sha256_file(b / entry.path().filename()));
  }
}

TEST_CASE("synth-data rejects p > 1 naming the field") {
  TempDir dir("cli-synth-bad");
  const auto p = edited_config(dir.path(), [](json& j) { j["dataset"]["environments"][1]["spurious_correlation"] = 1.5; });
  const Result r = run_cli({"synth-data", "--config", p.string(), "--out", (dir.path() / "d").string()});
  CHECK(r.code == 2);
  CHECK(r.err.find("spurious_correlation") != std::string::npos);
  CHECK(!fs::exists(dir.path() / "d" / "manifest.json"));
}

TEST_CASE("the output root variable is used when --out is absent") {
  TempDir dir("cli-root");
  {
    ScopedEnv env(cli::kOutputRootVariable, dir.path().string());
    const Result r = run_cli({"synth-data", "--config", golden_config()});
    CHECK(r.code == 0);
    CHECK(fs::exists(dir.path() / "data" / "manifest.json"));
  }
  ::unsetenv(cli::kOutputRootVariable);
  const Result r = run_cli({"synth-data", "--config", golden_config()});
  CHECK(r.code == 2);
  CHECK(r.err.find(cli::kOutputRootVariable) != std::string::npos);
}

// ---------------------------------------------------------------------------
// train

TEST_CASE("train ours writes one checkpoint per stage and resumes") {
  TempDir dir("cli-train");
  const std::string run = (dir.path() / "run").string();
  const std::vector<std::string> args{"train", "--config", golden_config(), "--data", golden_data().string(),
                                      "--out", run};
  const Result r = run_cli(args);
  REQUIRE(r.code == 0);
  CHECK(checkpoint_roles(run) == std::set<std::string>{"decoder", "critic", "latents", "encoder_pretrained", "model"});
  CHECK(r.err.find("stage finetune: trained") != std::string::npos);

  const Result again = run_cli(args);
  REQUIRE(again.code == 0);
  CHECK(again.err.find("stage decoder_gan: reused") != std::string::npos);
  CHECK(again.err.find("stage finetune: reused") != std::string::npos);

  // The golden checkpoint was produced by this command on this config.
  CHECK(io::read_text(fs::path(run) / "model.json") == io::read_text(kGolden / "model.json"));
  CHECK(io::sha256_file(fs::path(run) / "model.bin") == io::sha256_file(kGolden / "model.bin"));
}

TEST_CASE("train is deterministic and flags override the config") {
  TempDir dir("cli-train-det");
  const auto run = [&](const std::string& name, const std::string& variant) {
    return run_cli({"train", "--config", golden_config(), "--data", golden_data().string(), "--variant", variant,
                 "--seed", "5", "--out", (dir.path() / name).string()});
  };
  REQUIRE(run("a", "traj_irm").code == 0);
  REQUIRE(run("b", "traj_irm").code == 0);
  CHECK(checkpoint_roles(dir.path() / "a") == std::set<std::string>{"model"});
  for (const char* f : {"model.json", "model.bin", "run.json", "experiment.json", "curves/traj_irm.csv"}) {
    CAPTURE(f);
    if (std::string(f) == "run.json" || std::string(f) == "experiment.json") continue;  // hold their own paths
    CHECK(io::sha256_file(dir.path() / "a" / f) == io::sha256_file(dir.path() / "b" / f));
  }
  const json record = json::parse(io::read_text(dir.path() / "a" / "run.json"));
  CHECK(record.at("variant") == "traj_irm");
  CHECK(record.at("seed") == 5);
  const json effective = json::parse(io::read_text(dir.path() / "a" / "experiment.json"));
  CHECK(effective.at("train").at("seed") == 5);
  CHECK(effective.at("dataset").at("seed") == 5);
}

TEST_CASE("train rejects unknown variants, missing data and mismatched architectures") {
  TempDir dir("cli-train-bad");
  const std::string out = (dir.path() / "r").string();
  Result r = run_cli({"train", "--config", golden_config(), "--data", golden_data().string(), "--variant", "best",
                   "--out", out});
  CHECK(r.code == 2);
  CHECK(r.err.find("latent_irmv1") != std::string::npos);

  r = run_cli({"train", "--config", golden_config(), "--out", out});
  CHECK(r.code == 2);
  CHECK(r.err.find("--data") != std::string::npos);

  const auto p = edited_config(dir.path(), [](json& j) { j["train"]["architecture"]["n_points"] = 8; });
  r = run_cli({"train", "--config", p.string(), "--data", golden_data().string(), "--out", out});
  CHECK(r.code == 2);
  CHECK(r.err.find("n_points") != std::string::npos);
}

TEST_CASE("train refuses a corrupted dataset") {
  TempDir dir("cli-train-corrupt");
  const fs::path data = dir.path() / "data";
  REQUIRE(run_cli({"synth-data", "--config", golden_config(), "--out", data.string()}).code == 0);
  const json m = json::parse(io::read_text(data / "manifest.json"));
  const fs::path file = data / m.at("files").at(0).at("path").get<std::string>();
  std::vector<std::uint8_t> bytes = io::read_bytes(file);
  bytes[bytes.size() / 2] ^= 0x01;
  io::write_bytes(file, bytes);
  const Result r = run_cli({"train", "--config", golden_config(), "--data", (data / "manifest.json").string(), "--out",
                         (dir.path() / "run").string()});
  CHECK(r.code == 1);
  CHECK(r.err.find(file.filename().string()) != std::string::npos);
}

// ---------------------------------------------------------------------------
// eval

TEST_CASE("evaluating the shipped reference checkpoint reproduces the shipped report") {
  TempDir dir("cli-eval");
  const Result r = run_cli({"eval", "--checkpoint", (kGolden / "model.json").string(), "--data", golden_data().string(),
                         "--split", "ood", "--out", dir.path().string()});
  REQUIRE(r.code == 0);
  for (const char* f : {"eval-ood.json", "eval-ood.csv", "eval-ood.txt"}) {
    CAPTURE(f);
    CHECK(io::read_text(dir.path() / f) == io::read_text(kGolden / f));
  }
  const ev::EvalReport rep =
      ev::EvalReport::from_json(json::parse(io::read_text(dir.path() / "eval-ood.json")), "report");
  CHECK(rep.variant == "ours");
  REQUIRE(rep.environments.size() == 1);
  CHECK(rep.environments[0].environment_id == 2);
  CHECK(r.out == io::read_text(kGolden / "eval-ood.txt"));
}

TEST_CASE("eval writes overlays, is idempotent and fails on checksum errors") {
  TempDir dir("cli-eval2");
  const std::vector<std::string> args{"eval", "--checkpoint", (kGolden / "model.json").string(), "--data",
                                      golden_data().string(), "--split", "id", "--out", dir.path().string(),
                                      "--overlay-rows", "0,5"};
  REQUIRE(run_cli(args).code == 0);
  const std::string first = io::read_text(dir.path() / "overlay-id.svg");
  const std::string csv = io::read_text(dir.path() / "eval-id.csv");
  REQUIRE(run_cli(args).code == 0);
  CHECK(io::read_text(dir.path() / "overlay-id.svg") == first);
  CHECK(io::read_text(dir.path() / "eval-id.csv") == csv);
  std::istringstream in(first);
  boost::property_tree::ptree tree;
  CHECK_NOTHROW(boost::property_tree::read_xml(in, tree));
  CHECK(first.find("env 1 row 5") != std::string::npos);

  fs::copy_file(kGolden / "model.json", dir.path() / "model.json");
  std::vector<std::uint8_t> blob = io::read_bytes(kGolden / "model.bin");
  blob[100] ^= 0x10;
  io::write_bytes(dir.path() / "model.bin", blob);
  const Result bad = run_cli({"eval", "--checkpoint", (dir.path() / "model.json").string(), "--data",
                           golden_data().string(), "--out", (dir.path() / "x").string()});
  CHECK(bad.code == 1);
  CHECK(bad.err.find("checksum") != std::string::npos);

  CHECK(run_cli({"eval", "--checkpoint", (kGolden / "model.json").string(), "--data", golden_data().string(), "--split",
              "test", "--out", dir.path().string()})
            .code == 2);
}

// ---------------------------------------------------------------------------
// report

TEST_CASE("report builds the six-row ablation table from run directories") {
  TempDir dir("cli-report");
  std::vector<std::string> args{"report", "--out", (dir.path() / "report").string(), "--runs"};
  for (const char* v : {"ours", "e2e_nt", "e2e_nt_nirm", "random_nt_nirm", "traj_irm", "latent_irmv1"}) {
    const std::string run = (dir.path() / v).string();
    REQUIRE(run_cli({"train", "--config", golden_config(), "--data", golden_data().string(), "--variant", v, "--out", run})
                .code == 0);
    args.push_back(run);
  }
  const Result r = run_cli(args);
  REQUIRE(r.code == 0);
  const fs::path out = dir.path() / "report";
  const ev::AblationTable table = ev::AblationTable::from_csv(io::read_text(out / "ablation.csv"));
  REQUIRE(table.rows.size() == 6);
  for (const auto& row : table.rows) CHECK(row.present);
  CHECK(r.out == io::read_text(out / "ablation.txt"));

  // Values pass through from the per-run reports unchanged.
  const ev::EvalReport ood = ev::EvalReport::from_json(
      json::parse(io::read_text(out / "runs" / "4-traj_irm-seed0" / "eval-ood.json")), "report");
  CHECK(table.row(nirm::pipelines::Variant::kTrajIrm).ood_ade == ood.ade);
  const ev::EvalReport id = ev::EvalReport::from_json(
      json::parse(io::read_text(out / "runs" / "0-ours-seed0" / "eval-id.json")), "report");
  CHECK(table.row(nirm::pipelines::Variant::kOurs).id_ade == id.ade);

  std::istringstream svg(io::read_text(out / "ablation.svg"));
  boost::property_tree::ptree tree;
  CHECK_NOTHROW(boost::property_tree::read_xml(svg, tree));

  // Same inputs, same bytes.
  const std::string csv = io::read_text(out / "ablation.csv");
  REQUIRE(run_cli(args).code == 0);
  CHECK(io::read_text(out / "ablation.csv") == csv);

  // A subset marks the rest absent without failing.
  const Result partial = run_cli({"report", "--out", (dir.path() / "partial").string(), "--runs", args[4], args[5]});
  REQUIRE(partial.code == 0);
  const ev::AblationTable t2 = ev::AblationTable::from_csv(io::read_text(dir.path() / "partial" / "ablation.csv"));
  CHECK(t2.row(nirm::pipelines::Variant::kOurs).present);
  CHECK(!t2.row(nirm::pipelines::Variant::kLatentIrmv1).present);
  CHECK(partial.out.find("absent") != std::string::npos);
}

TEST_CASE("report fails on a tampered run") {
  TempDir dir("cli-report-bad");
  const std::string run = (dir.path() / "run").string();
  REQUIRE(run_cli({"train", "--config", golden_config(), "--data", golden_data().string(), "--variant", "e2e_nt",
                "--out", run})
              .code == 0);
  io::write_text(fs::path(run) / "curves" / "joint.csv", "step,objective\n");
  const Result r = run_cli({"report", "--out", (dir.path() / "rep").string(), "--runs", run});
  CHECK(r.code == 1);
  CHECK(r.err.find("joint.csv") != std::string::npos);
}

TEST_CASE("usage errors exit with status 2") {
  CHECK(run_cli({}).code == 2);
  CHECK(run_cli({"frobnicate"}).code == 2);
  CHECK(run_cli({"eval", "--data", "x"}).code == 2);
  CHECK(run_cli({"--help"}).code == 0);
}

TEST_CASE("the shipped benchmark experiment matches the built-in profile") {
  const cli::ExperimentConfig c = cli::load_experiment(NIRM_CONFIG_DIR "/benchmark.json");
  CHECK(nirm::synthdata::to_json(c.dataset) == nirm::synthdata::to_json(nirm::synthdata::DatasetConfig::benchmark(0)));
  CHECK(c.train == nirm::pipelines::benchmark_profile(nirm::pipelines::Variant::kOurs, 0));
}
