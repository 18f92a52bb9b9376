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

#include <boost/math/distributions/chi_squared.hpp>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "nirm/core/io.hpp"
#include "nirm/synthdata/dataset.hpp"
#include "support/oracles.hpp"
#include "support/tempdir.hpp"

namespace sd = nirm::synthdata;
namespace io = nirm::io;
using nirm::testing::close;

namespace {

sd::DatasetConfig small_config(std::uint64_t seed, double p_test = 0.1) {
  sd::DatasetConfig cfg;
  cfg.seed = seed;
  cfg.environments = {{0, 0.9, 0.5, 300, 50, sd::Role::kTrain},
                      {1, 0.8, 0.5, 300, 50, sd::Role::kTrain},
                      {2, p_test, 0.5, 300, 0, sd::Role::kTest}};
  return cfg;
}

/// Solves the normal equations (XᵀX + εI) β = Xᵀy by Gaussian elimination.
std::vector<double> least_squares(const std::vector<std::vector<double>>& x, const std::vector<double>& y) {
  const std::size_t d = x.front().size();
  std::vector<std::vector<double>> a(d, std::vector<double>(d + 1, 0.0));
  for (std::size_t n = 0; n < x.size(); ++n) {
    for (std::size_t i = 0; i < d; ++i) {
      for (std::size_t j = 0; j < d; ++j) a[i][j] += x[n][i] * x[n][j];
      a[i][d] += x[n][i] * y[n];
    }
  }
  for (std::size_t i = 0; i < d; ++i) a[i][i] += 1e-9;
  for (std::size_t c = 0; c < d; ++c) {
    std::size_t piv = c;
    for (std::size_t r = c + 1; r < d; ++r) {
      if (std::abs(a[r][c]) > std::abs(a[piv][c])) piv = r;
    }
    std::swap(a[c], a[piv]);
    for (std::size_t r = 0; r < d; ++r) {
      if (r == c) continue;
      const double f = a[r][c] / a[c][c];
      for (std::size_t k = c; k <= d; ++k) a[r][k] -= f * a[c][k];
    }
  }
  std::vector<double> beta(d);
  for (std::size_t i = 0; i < d; ++i) beta[i] = a[i][d] / a[i][i];
  return beta;
}

}  // namespace

TEST_CASE("gt_trajectory: straight line, arc, mirror symmetry") {
  sd::ManeuverSpec straight{0.0, 10.0, 10.0, 0.0};
  const auto line = sd::gt_trajectory(straight, 1.0, 1);
  CHECK(line.points[0].longitudinal == 10.0);
  CHECK(line.points[0].lateral == 0.0);

  sd::ManeuverSpec arc{0.1, 10.0, 10.0, 0.0};
  const auto a = sd::gt_trajectory(arc, 1.0, 1);
  CHECK(close(a.points[0].longitudinal, 8.41471, 1e-6, 0.0));
  CHECK(close(a.points[0].lateral, 4.59698, 1e-6, 0.0));
  CHECK(close(a.points[0].longitudinal, std::sin(1.0) / 0.1, 1e-14, 0.0));
  CHECK(close(a.points[0].lateral, (1.0 - std::cos(1.0)) / 0.1, 1e-12, 0.0));

  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 200; ++trial) {
    const double k = nirm::testing::uniform(rng, 0.0, 0.2);
    const double v0 = nirm::testing::uniform(rng, 0.0, 10.0);
    const double vt = nirm::testing::uniform(rng, 0.0, 10.0);
    const double acc = vt > v0 ? 2.0 : (vt < v0 ? -2.0 : 0.0);
    const auto left = sd::gt_trajectory({k, v0, vt, acc}, 3.0, 16);
    const auto right = sd::gt_trajectory({-k, v0, vt, acc}, 3.0, 16);
    for (std::size_t i = 0; i < 16; ++i) {
      CHECK(left.points[i].longitudinal == right.points[i].longitudinal);
      CHECK(left.points[i].lateral == -right.points[i].lateral);
    }
  }
}

TEST_CASE("gt_trajectory: continuity at zero curvature, origin, monotone arc length") {
  std::mt19937_64 rng(22);
  for (int trial = 0; trial < 200; ++trial) {
    const double v0 = nirm::testing::uniform(rng, 0.0, 10.0);
    const double vt = nirm::testing::uniform(rng, 0.0, 10.0);
    const double acc = vt > v0 ? 2.0 : (vt < v0 ? -2.0 : 0.0);
    const sd::ManeuverSpec m0{0.0, v0, vt, acc};
    const sd::ManeuverSpec m1{1e-8, v0, vt, acc};
    const sd::ManeuverSpec m_edge{1e-9, v0, vt, acc};
    const auto line = sd::gt_trajectory(m0, 3.0, 16);
    const auto bent = sd::gt_trajectory(m1, 3.0, 16);
    const auto edge = sd::gt_trajectory(m_edge, 3.0, 16);
    for (std::size_t i = 0; i < 16; ++i) {
      // The exact deviation from the line is about κs²/2, which reaches
      // 4.5e-6 m at κ = 1e-8 over 30 m; the bound below is that expression.
      const double s = sd::arc_length(m1, line.points[i].query_time);
      const double dx = line.points[i].longitudinal - bent.points[i].longitudinal;
      const double dy = line.points[i].lateral - bent.points[i].lateral;
      CHECK(std::hypot(dx, dy) <= 0.5e-8 * s * s * (1.0 + 1e-6) + 1e-12);
      // At the straight-line threshold the jump is below a micrometre.
      const double ex = line.points[i].longitudinal - edge.points[i].longitudinal;
      const double ey = line.points[i].lateral - edge.points[i].lateral;
      CHECK(std::hypot(ex, ey) < 1e-6);
    }
    double prev = 0.0;
    for (int k = 0; k <= 300; ++k) {
      const double t = 0.01 * k;
      const double s = sd::arc_length(m1, t);
      CHECK(s >= prev);
      prev = s;
      const double v = sd::speed_at(m1, t);
      CHECK(v >= std::min(v0, vt) - 1e-12);
      CHECK(v <= std::max(v0, vt) + 1e-12);
    }
  }
  const auto origin = sd::arc_point(0.15, 0.0);
  CHECK(origin[0] == 0.0);
  CHECK(origin[1] == 0.0);
  CHECK(sd::arc_length({0.1, 4.0, 8.0, 2.0}, 0.0) == 0.0);
  // Deceleration: 8 → 4 m/s at 2 m/s² reaches the target after 2 s.
  CHECK(sd::speed_at({0.0, 8.0, 4.0, -2.0}, 3.0) == 4.0);
  CHECK(sd::arc_length({0.0, 8.0, 4.0, -2.0}, 3.0) == 16.0);
}

TEST_CASE("maneuver validation") {
  CHECK_THROWS_AS(sd::gt_trajectory({0.3, 5, 5, 0}, 3, 16), std::invalid_argument);
  CHECK_THROWS_AS(sd::gt_trajectory({0.0, -1, 5, 2}, 3, 16), std::invalid_argument);
  CHECK_THROWS_AS(sd::gt_trajectory({0.0, 5, 11, 2}, 3, 16), std::invalid_argument);
  CHECK_THROWS_AS(sd::gt_trajectory({0.0, 5, 8, -2}, 3, 16), std::invalid_argument);
}

TEST_CASE("spurious features: p = 1 is a deterministic function of the maneuver") {
  sd::DatasetConfig cfg = small_config(3);
  const sd::EnvironmentSpec env{7, 1.0, 0.5, 400, 0, sd::Role::kTrain};
  const auto emb = sd::make_embedding(cfg);
  for (const auto& s : sd::generate_environment(cfg, env)) {
    CHECK(s.spurious_matches);
    const auto code = sd::maneuver_code(s.maneuver, cfg);
    for (std::size_t k = 0; k < cfg.spurious_dim; ++k) {
      const double want = emb.spurious_matrix[2 * k] * code[0] + emb.spurious_matrix[2 * k + 1] * code[1] +
                          emb.spurious_offset[k];
      CHECK(s.observation.spurious_features[k] == want);
    }
  }
}

TEST_CASE("spurious features: p = 0 passes a chi-square independence test") {
  sd::DatasetConfig cfg = small_config(4);
  const sd::EnvironmentSpec env{0, 0.0, 0.5, 2000, 0, sd::Role::kTrain};
  const auto samples = sd::generate_environment(cfg, env);
  const auto emb = sd::make_embedding(cfg);

  // Trajectory bins: sign of final lateral offset × final distance above 15 m.
  // Feature bins: quartiles of the spurious block's projection on the
  // direction that encodes curvature.
  std::vector<double> proj;
  for (const auto& s : samples) {
    double p = 0.0;
    for (std::size_t k = 0; k < cfg.spurious_dim; ++k) {
      p += emb.spurious_matrix[2 * k] * (s.observation.spurious_features[k] - emb.spurious_offset[k]);
    }
    proj.push_back(p);
  }
  std::vector<double> sorted = proj;
  std::sort(sorted.begin(), sorted.end());
  const double q[3] = {sorted[500], sorted[1000], sorted[1500]};

  double table[4][4] = {};
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& last = samples[i].trajectory.points.back();
    const int row = (last.lateral > 0.0 ? 2 : 0) + (std::hypot(last.longitudinal, last.lateral) > 15.0 ? 1 : 0);
    const int col = (proj[i] > q[0]) + (proj[i] > q[1]) + (proj[i] > q[2]);
    table[row][col] += 1.0;
  }
  double rows[4] = {}, cols[4] = {}, n = 0.0;
  for (int r = 0; r < 4; ++r) {
    for (int c = 0; c < 4; ++c) {
      rows[r] += table[r][c];
      cols[c] += table[r][c];
      n += table[r][c];
    }
  }
  double stat = 0.0;
  for (int r = 0; r < 4; ++r) {
    for (int c = 0; c < 4; ++c) {
      const double e = rows[r] * cols[c] / n;
      REQUIRE(e > 5.0);
      stat += (table[r][c] - e) * (table[r][c] - e) / e;
    }
  }
  const double critical = boost::math::quantile(boost::math::chi_squared(9.0), 0.99);
  CHECK(stat < critical);

  // The same statistic detects dependence when p = 1.
  const sd::EnvironmentSpec linked{0, 1.0, 0.5, 2000, 0, sd::Role::kTrain};
  const auto dep = sd::generate_environment(cfg, linked);
  double t2[4][4] = {};
  std::vector<double> p2;
  for (const auto& s : dep) {
    double p = 0.0;
    for (std::size_t k = 0; k < cfg.spurious_dim; ++k) {
      p += emb.spurious_matrix[2 * k] * (s.observation.spurious_features[k] - emb.spurious_offset[k]);
    }
    p2.push_back(p);
  }
  std::vector<double> s2 = p2;
  std::sort(s2.begin(), s2.end());
  for (std::size_t i = 0; i < dep.size(); ++i) {
    const auto& last = dep[i].trajectory.points.back();
    const int row = (last.lateral > 0.0 ? 2 : 0) + (std::hypot(last.longitudinal, last.lateral) > 15.0 ? 1 : 0);
    const int col = (p2[i] > s2[500]) + (p2[i] > s2[1000]) + (p2[i] > s2[1500]);
    t2[row][col] += 1.0;
  }
  double r2[4] = {}, c2[4] = {};
  for (int r = 0; r < 4; ++r) {
    for (int c = 0; c < 4; ++c) {
      r2[r] += t2[r][c];
      c2[c] += t2[r][c];
    }
  }
  double stat2 = 0.0;
  for (int r = 0; r < 4; ++r) {
    for (int c = 0; c < 4; ++c) {
      const double e = r2[r] * c2[c] / 2000.0;
      if (e > 0.0) stat2 += (t2[r][c] - e) * (t2[r][c] - e) / e;
    }
  }
  CHECK(stat2 > critical);
}

TEST_CASE("make_dataset: byte-identical regeneration and exact round trip") {
  nirm::testing::TempDir dir("synth");
  const auto cfg = small_config(5);
  const auto m1 = sd::make_dataset(cfg, dir.path() / "a");
  const auto m2 = sd::make_dataset(cfg, dir.path() / "b" / "nested");
  REQUIRE(m1.files.size() == 5);
  CHECK(io::read_bytes(dir.path() / "a" / "manifest.json") ==
        io::read_bytes(dir.path() / "b" / "nested" / "manifest.json"));
  for (const auto& f : m1.files) {
    CHECK(io::read_bytes(dir.path() / "a" / f.path) == io::read_bytes(dir.path() / "b" / "nested" / f.path));
  }

  const auto batches = sd::load_dataset(dir.path() / "a" / "manifest.json");
  REQUIRE(batches.size() == 5);
  std::size_t i = 0;
  for (const auto& env : cfg.environments) {
    const auto samples = sd::generate_environment(cfg, env);
    std::size_t offset = 0;
    while (i < batches.size() && batches[i].environment_id == env.environment_id) {
      const auto& b = batches[i];
      const std::size_t expect = b.split == "id" ? env.heldout_count : env.sample_count;
      CHECK(b.size() == expect);
      for (std::size_t r = 0; r < b.size(); ++r) {
        const auto& s = samples[offset + r];
        CHECK(b.observations[r].invariant_features == s.observation.invariant_features);
        CHECK(b.observations[r].spurious_features == s.observation.spurious_features);
        CHECK(b.observations[r].speed == s.observation.speed);
        CHECK(b.truths[r].flatten() == s.trajectory.flatten());
      }
      offset += b.size();
      ++i;
    }
  }
  CHECK(sd::load_split(dir.path() / "a" / "manifest.json", "ood").size() == 1);
  CHECK(sd::load_split(dir.path() / "a" / "manifest.json", "id").size() == 2);

  const auto reread = sd::read_manifest(dir.path() / "a" / "manifest.json");
  CHECK(reread.config == cfg);
}

TEST_CASE("load_dataset rejects corrupted and truncated files, naming them") {
  nirm::testing::TempDir dir("synth-bad");
  const auto m = sd::make_dataset(small_config(6), dir.path());
  const auto target = dir.path() / m.files[1].path;
  auto bytes = io::read_bytes(target);
  bytes[100] ^= 0x01;
  io::write_bytes(target, bytes);
  CHECK_THROWS_WITH_AS(sd::load_dataset(dir.path() / "manifest.json"), doctest::Contains(m.files[1].path.c_str()),
                       io::IntegrityError);
  bytes[100] ^= 0x01;
  bytes.resize(bytes.size() - 8);
  io::write_bytes(target, bytes);
  CHECK_THROWS_WITH_AS(sd::load_dataset(dir.path() / "manifest.json"), doctest::Contains("truncated"),
                       io::IntegrityError);
}

TEST_CASE("dataset config validation names the field") {
  auto cfg = small_config(7);
  cfg.environments[1].spurious_correlation = 1.5;
  CHECK_THROWS_WITH_AS(cfg.validate(), doctest::Contains("environments[1].spurious_correlation"),
                       std::invalid_argument);

  nlohmann::json j = sd::to_json(small_config(7));
  CHECK(sd::dataset_config_from_json(j, "dataset") == small_config(7));
  j["environments"][0]["colour"] = "red";
  CHECK_THROWS_WITH_AS(sd::dataset_config_from_json(j, "dataset"), doctest::Contains("dataset.environments[0].colour"),
                       std::invalid_argument);
  j = sd::to_json(small_config(7));
  j["environments"][2]["spurious_correlation"] = 2.0;
  CHECK_THROWS_WITH_AS(sd::dataset_config_from_json(j, "dataset"),
                       doctest::Contains("dataset.environments[2].spurious_correlation"), std::invalid_argument);
}

TEST_CASE("a spurious-only least-squares predictor degrades on the test environment") {
  const auto cfg = sd::DatasetConfig::benchmark(0);
  std::vector<std::vector<double>> x;
  std::vector<std::vector<double>> y(2 * cfg.n_points);
  std::vector<sd::Sample> test;
  for (const auto& env : cfg.environments) {
    auto samples = sd::generate_environment(cfg, env);
    if (env.role == sd::Role::kTest) {
      test = std::move(samples);
      continue;
    }
    for (std::size_t i = 0; i < env.sample_count; ++i) {
      std::vector<double> row = samples[i].observation.spurious_features;
      row.push_back(1.0);
      x.push_back(row);
      const auto flat = samples[i].trajectory.flatten();
      for (std::size_t j = 0; j < flat.size(); ++j) y[j].push_back(flat[j]);
    }
  }
  std::vector<std::vector<double>> beta;
  for (const auto& col : y) beta.push_back(least_squares(x, col));
  auto mse = [&](const std::vector<std::vector<double>>& rows, const std::vector<std::vector<double>>& truth) {
    double s = 0.0;
    for (std::size_t n = 0; n < rows.size(); ++n) {
      for (std::size_t j = 0; j < beta.size(); ++j) {
        double pred = 0.0;
        for (std::size_t k = 0; k < rows[n].size(); ++k) pred += beta[j][k] * rows[n][k];
        s += (pred - truth[n][j]) * (pred - truth[n][j]);
      }
    }
    return s / static_cast<double>(rows.size());
  };
  std::vector<std::vector<double>> train_truth;
  for (std::size_t n = 0; n < x.size(); ++n) {
    std::vector<double> t;
    for (const auto& col : y) t.push_back(col[n]);
    train_truth.push_back(t);
  }
  std::vector<std::vector<double>> tx, ty;
  for (const auto& s : test) {
    auto row = s.observation.spurious_features;
    row.push_back(1.0);
    tx.push_back(row);
    ty.push_back(s.trajectory.flatten());
  }
  const double train_risk = mse(x, train_truth);
  const double test_risk = mse(tx, ty);
  MESSAGE("spurious-only least squares: train " << train_risk << ", test " << test_risk);
  CHECK(test_risk > 1.5 * train_risk);
}
