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

#include <algorithm>
#include <boost/property_tree/ptree.hpp>
#include <boost/property_tree/xml_parser.hpp>
#include <cmath>
#include <iterator>
#include <random>
#include <sstream>

#include "doctest.h"
#include "nirm/core/io.hpp"
#include "nirm/eval/eval.hpp"
#include "nirm/eval/plots.hpp"
#include "nirm/losses/losses.hpp"
#include "nirm/models/checkpoint.hpp"
#include "nirm/models/models.hpp"
#include "nirm/synthdata/dataset.hpp"
#include "support/tempdir.hpp"

namespace ev = nirm::eval;
namespace io = nirm::io;
namespace losses = nirm::losses;
namespace models = nirm::models;
namespace pl = nirm::pipelines;
namespace sd = nirm::synthdata;
using nirm::ad::Tensor;
using nirm::json_util::json;
using nirm::testing::TempDir;

namespace {

models::Trajectory random_trajectory(std::mt19937_64& rng, std::size_t n = 16) {
  std::normal_distribution<double> d(0.0, 3.0);
  models::Trajectory t;
  const auto grid = models::time_grid(3.0, n);
  for (double time : grid) t.points.push_back({d(rng), d(rng), time});
  return t;
}

models::ArchitectureConfig tiny_arch() {
  models::ArchitectureConfig a;
  a.latent_dim = 3;
  a.decoder_hidden = {6, 6, 6};
  a.encoder_hidden = {6, 6};
  a.critic_hidden = {6, 6};
  return a;
}

struct Fixture {
  TempDir dir{"eval"};
  std::filesystem::path manifest, checkpoint;

  Fixture() {
    sd::DatasetConfig cfg;
    cfg.seed = 4;
    cfg.environments = {{0, 0.9, 2.0, 20, 12, sd::Role::kTrain},
                        {1, 0.8, 2.0, 20, 7, sd::Role::kTrain},
                        {2, 0.1, 2.0, 15, 0, sd::Role::kTest}};
    sd::make_dataset(cfg, dir.path() / "data");
    manifest = dir.path() / "data" / "manifest.json";
    models::Checkpoint ck;
    ck.role = "model";
    ck.variant = "e2e_nt";
    ck.seed = 9;
    ck.arch = tiny_arch();
    ck.params = pl::TrainedModel{pl::ModelKind::kLatentDecoder, models::init_encoder(ck.arch, 1),
                                 models::init_decoder(ck.arch, 2)}
                    .merged();
    checkpoint = dir.path() / "model.json";
    models::save_checkpoint(checkpoint, ck);
  }
};

const Fixture& fixture() {
  static const Fixture f;
  return f;
}

void check_well_formed_xml(const std::string& svg) {
  std::istringstream in(svg);
  boost::property_tree::ptree tree;
  CHECK_NOTHROW(boost::property_tree::read_xml(in, tree));
  CHECK(tree.count("svg") == 1);
}

ev::EvalReport report_with_ade(double ade) {
  ev::EvalReport r;
  r.ade = ade;
  return r;
}

}  // namespace

// ---------------------------------------------------------------------------
// ADE

TEST_CASE("ade closed forms") {
  std::mt19937_64 rng(1);
  const models::Trajectory a = random_trajectory(rng);
  CHECK(ev::ade(a, a) == 0.0);
  models::Trajectory shifted = a;
  for (auto& p : shifted.points) {
    p.longitudinal += 3.0;
    p.lateral += 4.0;
  }
  CHECK(ev::ade(shifted, a) == doctest::Approx(5.0).epsilon(1e-14));
}

TEST_CASE("ade is symmetric, permutation invariant and obeys the triangle inequality") {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 50; ++trial) {
    const models::Trajectory a = random_trajectory(rng), b = random_trajectory(rng), c = random_trajectory(rng);
    CHECK(ev::ade(a, b) == ev::ade(b, a));
    CHECK(ev::ade(a, c) <= ev::ade(a, b) + ev::ade(b, c) + 1e-12);

    std::vector<std::size_t> perm(a.points.size());
    for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;
    std::shuffle(perm.begin(), perm.end(), rng);
    models::Trajectory pa = a, pb = b;
    for (std::size_t i = 0; i < perm.size(); ++i) {
      pa.points[i] = a.points[perm[i]];
      pb.points[i] = b.points[perm[i]];
      // Keep the grids matched; only the pairing order changes.
      pa.points[i].query_time = pb.points[i].query_time = a.points[i].query_time;
    }
    CHECK(ev::ade(pa, pb) == doctest::Approx(ev::ade(a, b)).epsilon(1e-13));
  }
}

TEST_CASE("ade rejects mismatched grids") {
  std::mt19937_64 rng(3);
  const models::Trajectory a = random_trajectory(rng, 16), b = random_trajectory(rng, 8);
  CHECK_THROWS_AS(ev::ade(a, b), std::invalid_argument);
  models::Trajectory c = a;
  c.points[5].query_time += 0.01;
  CHECK_THROWS_WITH_AS(ev::ade(a, c), doctest::Contains("time grids"), std::invalid_argument);
}

TEST_CASE("risk is zero exactly when ade is zero") {
  std::mt19937_64 rng(4);
  losses::RiskConfig cfg;
  for (int trial = 0; trial < 20; ++trial) {
    const models::Trajectory a = random_trajectory(rng);
    models::Trajectory b = a;
    CHECK(losses::risk(a, b, cfg) == 0.0);
    CHECK(ev::ade(a, b) == 0.0);
    b.points[static_cast<std::size_t>(trial) % b.points.size()].lateral += 1e-3;
    CHECK(losses::risk(a, b, cfg) > 0.0);
    CHECK(ev::ade(a, b) > 0.0);
  }
}

// ---------------------------------------------------------------------------
// evaluate

TEST_CASE("an oracle predictor scores zero in every environment") {
  const auto batches = sd::load_dataset(fixture().manifest);
  const ev::Predictor oracle = [](const losses::PreparedBatch& b) { return b.truths; };
  const ev::EvalReport r = ev::evaluate(oracle, batches, tiny_arch(), 5.0);
  REQUIRE(r.environments.size() == 3);
  for (const auto& e : r.environments) {
    CHECK(e.ade == 0.0);
    CHECK(e.risk == 0.0);
  }
  CHECK(r.total_samples == 20 + 12 + 20 + 7 + 15);
}

TEST_CASE("report totals are the sample-weighted means of the environments") {
  const ev::EvalReport r = ev::evaluate_checkpoint(fixture().checkpoint, fixture().manifest, "id");
  REQUIRE(r.environments.size() == 2);
  CHECK(r.environments[0].samples == 12);
  CHECK(r.environments[1].samples == 7);
  CHECK(r.total_samples == 19);
  const double ade = (12 * r.environments[0].ade + 7 * r.environments[1].ade) / 19.0;
  const double risk = (12 * r.environments[0].risk + 7 * r.environments[1].risk) / 19.0;
  CHECK(r.ade == doctest::Approx(ade).epsilon(1e-15));
  CHECK(r.risk == doctest::Approx(risk).epsilon(1e-15));
  for (const auto& e : r.environments) CHECK(e.ade >= 0.0);
}

TEST_CASE("per-environment ADE matches a per-sample recomputation") {
  const models::Checkpoint ck = models::load_checkpoint(fixture().checkpoint);
  const auto model = pl::TrainedModel::from_merged(ck.params, ck.arch);
  const auto batches = sd::load_split(fixture().manifest, "ood");
  const ev::EvalReport r = ev::evaluate(ev::model_predictor(model, ck.arch), batches, ck.arch, 5.0);
  const auto grid = models::time_grid(ck.arch.horizon, ck.arch.n_points);
  double total = 0.0, risk = 0.0;
  for (std::size_t i = 0; i < batches[0].size(); ++i) {
    const auto& obs = batches[0].observations[i];
    const auto& truth = batches[0].truths[i];
    const losses::EnvironmentBatch one{2, "ood", {obs}, {truth}};
    const Tensor<double> p = ev::model_predictor(model, ck.arch)(losses::prepare(one, ck.arch));
    const auto pred = models::Trajectory::from_flat(p.data(), grid, truth.condition_speed);
    total += ev::ade(pred, truth);
    risk += losses::risk(pred, truth, losses::RiskConfig{});
  }
  CHECK(r.environments[0].ade == doctest::Approx(total / 15.0).epsilon(1e-12));
  CHECK(r.environments[0].risk == doctest::Approx(risk / 15.0).epsilon(1e-12));
}

TEST_CASE("checkpoint evaluation is deterministic, records the variant and mutates nothing") {
  const auto& f = fixture();
  std::vector<std::string> before;
  for (const auto& entry : std::filesystem::recursive_directory_iterator(f.dir.path())) {
    if (entry.is_regular_file()) before.push_back(io::sha256_file(entry.path()));
  }
  const ev::EvalReport a = ev::evaluate_checkpoint(f.checkpoint, f.manifest, "ood");
  const ev::EvalReport b = ev::evaluate_checkpoint(f.checkpoint, f.manifest, "ood");
  CHECK(a == b);
  CHECK(a.to_csv() == b.to_csv());
  CHECK(a.variant == "e2e_nt");
  CHECK(a.seed == 9);
  CHECK(a.checkpoint == "model.json");
  CHECK(a.checkpoint_sha256 == io::sha256_file(f.checkpoint));
  REQUIRE(a.environments.size() == 1);
  CHECK(a.environments[0].environment_id == 2);
  CHECK(a.total_samples == 15);
  std::vector<std::string> after;
  for (const auto& entry : std::filesystem::recursive_directory_iterator(f.dir.path())) {
    if (entry.is_regular_file()) after.push_back(io::sha256_file(entry.path()));
  }
  CHECK(before == after);
}

TEST_CASE("checkpoint evaluation rejects bad splits and architecture mismatches") {
  const auto& f = fixture();
  CHECK_THROWS_WITH_AS(ev::evaluate_checkpoint(f.checkpoint, f.manifest, "test"), doctest::Contains("split"),
                       std::invalid_argument);
  TempDir dir("eval-mismatch");
  models::Checkpoint ck = models::load_checkpoint(f.checkpoint);
  ck.arch.spurious_dim = 4;
  ck.params = pl::TrainedModel{pl::ModelKind::kLatentDecoder, models::init_encoder(ck.arch, 1),
                               models::init_decoder(ck.arch, 2)}
                  .merged();
  models::save_checkpoint(dir.path() / "m.json", ck);
  CHECK_THROWS_WITH_AS(ev::evaluate_checkpoint(dir.path() / "m.json", f.manifest, "id"),
                       doctest::Contains("spurious_dim"), std::invalid_argument);
}

TEST_CASE("eval reports round-trip through JSON and render CSV and text") {
  const ev::EvalReport r = ev::evaluate_checkpoint(fixture().checkpoint, fixture().manifest, "id");
  CHECK(ev::EvalReport::from_json(json::parse(r.to_json().dump()), "report") == r);
  json extra = r.to_json();
  extra["colour"] = "red";
  CHECK_THROWS_WITH_AS(ev::EvalReport::from_json(extra, "report"), doctest::Contains("colour"),
                       nirm::json_util::ConfigError);
  const std::string csv = r.to_csv();
  CHECK(csv.rfind("environment_id,split,samples,ade_m,risk\n", 0) == 0);
  CHECK(csv.find("\nall,id,19," + io::format_double(r.ade) + ",") != std::string::npos);
  CHECK(r.to_text().find("e2e_nt") != std::string::npos);
}

// ---------------------------------------------------------------------------
// Ablation table and figures

TEST_CASE("ablation table follows the flag layout and marks missing variants absent") {
  std::vector<ev::RunScores> runs{
      {pl::Variant::kOurs, 0, report_with_ade(1.0), report_with_ade(2.0)},
      {pl::Variant::kOurs, 1, report_with_ade(3.0), report_with_ade(4.0)},
      {pl::Variant::kE2eNt, 0, report_with_ade(1.5), report_with_ade(3.5)},
  };
  const ev::AblationTable t = ev::ablation_table(runs);
  CHECK(t.rows.size() == 6);
  const auto& ours = t.row(pl::Variant::kOurs);
  CHECK(ours.present);
  CHECK(ours.seeds == std::vector<std::uint64_t>{0, 1});
  CHECK(ours.id_ade == 2.0);
  CHECK(ours.ood_ade == 3.0);
  CHECK(ours.id_ade_std == doctest::Approx(std::sqrt(2.0)));
  CHECK(t.row(pl::Variant::kE2eNt).ood_ade == 3.5);
  CHECK(t.row(pl::Variant::kE2eNt).ood_ade_std == 0.0);
  CHECK(!t.row(pl::Variant::kTrajIrm).present);

  const std::string text = t.to_text();
  std::istringstream lines(text);
  std::string line;
  bool saw_ours = false, saw_e2e = false;
  while (std::getline(lines, line)) {
    if (line.rfind("ours ", 0) == 0) {
      saw_ours = true;
      std::istringstream tokens(line);
      std::vector<std::string> words{std::istream_iterator<std::string>(tokens), {}};
      REQUIRE(words.size() >= 4);
      CHECK(words[1] == "✓");
      CHECK(words[2] == "✓");
      CHECK(words[3] == "NIRM");
    }
    if (line.rfind("e2e_nt ", 0) == 0) {
      saw_e2e = true;
      CHECK(line.find("✓") == std::string::npos);
      CHECK(line.find("IRM") == std::string::npos);
    }
    if (line.rfind("traj_irm", 0) == 0) CHECK(line.find("absent") != std::string::npos);
  }
  CHECK((saw_ours && saw_e2e));

  const std::string csv = t.to_csv();
  CHECK(csv.find("\nours,yes,yes,NIRM,ok,0;1,") != std::string::npos);
  CHECK(csv.find("\ne2e_nt,,,,ok,0,") != std::string::npos);
  CHECK(csv.find("\ntraj_irm,yes,,IRMv1,absent,,,,,\n") != std::string::npos);
  CHECK(ev::AblationTable::from_csv(csv) == t);
}

TEST_CASE("figures are well-formed SVG") {
  const models::Checkpoint ck = models::load_checkpoint(fixture().checkpoint);
  const auto model = pl::TrainedModel::from_merged(ck.params, ck.arch);
  const auto batches = sd::load_split(fixture().manifest, "ood");
  const auto samples = ev::overlay_samples(ev::model_predictor(model, ck.arch), batches[0], {0, 3, 7, 9, 14}, ck.arch);
  CHECK(samples.size() == 5);
  const std::string overlay = ev::trajectory_overlay_svg(samples, "ood <p = 0.1> & friends");
  check_well_formed_xml(overlay);
  CHECK(overlay.find("env 2 row 14") != std::string::npos);
  CHECK_THROWS_AS(ev::overlay_samples(ev::model_predictor(model, ck.arch), batches[0], {15}, ck.arch),
                  std::out_of_range);

  std::vector<ev::RunScores> runs;
  for (pl::Variant v : pl::all_variants()) {
    if (v != pl::Variant::kTrajIrm) runs.push_back({v, 0, report_with_ade(1.25), report_with_ade(2.5)});
  }
  const std::string chart = ev::ablation_bar_chart_svg(ev::ablation_table(runs));
  check_well_formed_xml(chart);
  CHECK(chart.find("latent_irmv1") != std::string::npos);
  CHECK(chart.find("absent") != std::string::npos);
  CHECK(chart == ev::ablation_bar_chart_svg(ev::ablation_table(runs)));
}
