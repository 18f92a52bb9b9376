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

#include "nirm/eval/plots.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "nirm/core/io.hpp"

namespace nirm::eval {

namespace {

std::string num(double x) { return io::format_fixed(x, 2); }

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string header(double width, double height) {
  return "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(width) +
         "\" height=\"" + num(height) + "\" viewBox=\"0 0 " + num(width) + " " + num(height) +
         "\" font-family=\"sans-serif\" font-size=\"12\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
}

std::string text(double x, double y, const std::string& s, const std::string& extra = "") {
  return "<text x=\"" + num(x) + "\" y=\"" + num(y) + "\"" + (extra.empty() ? "" : " " + extra) + ">" + escape(s) +
         "</text>\n";
}

}  // namespace

std::vector<OverlaySample> overlay_samples(const Predictor& predictor, const losses::EnvironmentBatch& batch,
                                           const std::vector<std::size_t>& rows,
                                           const models::ArchitectureConfig& arch) {
  const losses::PreparedBatch prepared = losses::prepare(batch, arch);
  const ad::Tensor<double> pred = predictor(prepared);
  const std::size_t width = prepared.truths.cols();
  std::vector<OverlaySample> out;
  for (std::size_t r : rows) {
    if (r >= prepared.size()) {
      throw std::out_of_range("overlay: row " + std::to_string(r) + " outside a batch of " +
                              std::to_string(prepared.size()));
    }
    OverlaySample s;
    s.label = "env " + std::to_string(batch.environment_id) + " row " + std::to_string(r);
    s.truth_flat.assign(prepared.truths.data().begin() + r * width, prepared.truths.data().begin() + (r + 1) * width);
    s.predicted_flat.assign(pred.data().begin() + r * width, pred.data().begin() + (r + 1) * width);
    out.push_back(std::move(s));
  }
  return out;
}

std::string trajectory_overlay_svg(const std::vector<OverlaySample>& samples, const std::string& title) {
  constexpr double kPanel = 220.0, kPad = 24.0, kTop = 40.0;
  const std::size_t cols = std::min<std::size_t>(std::max<std::size_t>(samples.size(), 1), 4);
  const std::size_t rows = (samples.size() + cols - 1) / std::max<std::size_t>(cols, 1);
  const double width = static_cast<double>(cols) * kPanel;
  const double height = kTop + static_cast<double>(std::max<std::size_t>(rows, 1)) * kPanel + 20.0;
  std::string svg = header(width, height);
  svg += text(kPad, 20, title, "font-size=\"14\"");
  svg += text(width - 190, 20, "truth", "fill=\"#1b7837\"") + text(width - 140, 20, "prediction", "fill=\"#c51b7d\"");

  for (std::size_t i = 0; i < samples.size(); ++i) {
    const OverlaySample& s = samples[i];
    if (s.truth_flat.size() != s.predicted_flat.size() || s.truth_flat.size() % 2 != 0) {
      throw std::invalid_argument("overlay: truth and prediction differ in length");
    }
    const double x0 = static_cast<double>(i % cols) * kPanel;
    const double y0 = kTop + static_cast<double>(i / cols) * kPanel;
    // One scale for both axes; longitudinal points up, lateral to the left.
    double reach = 1.0;
    for (const auto* v : {&s.truth_flat, &s.predicted_flat}) {
      for (std::size_t j = 0; j < v->size(); j += 2) reach = std::max({reach, std::abs((*v)[j]), 2 * std::abs((*v)[j + 1])});
    }
    const double cx = x0 + kPanel / 2, base = y0 + kPanel - kPad;
    const double k = (kPanel - 2 * kPad) / reach;
    auto polyline = [&](const std::vector<double>& flat, const char* colour) {
      std::string pts = num(cx) + "," + num(base);
      for (std::size_t j = 0; j < flat.size(); j += 2) {
        pts += " " + num(cx - k * flat[j + 1]) + "," + num(base - k * flat[j]);
      }
      return "<polyline fill=\"none\" stroke=\"" + std::string(colour) + "\" stroke-width=\"2\" points=\"" + pts +
             "\"/>\n";
    };
    svg += "<rect x=\"" + num(x0 + 4) + "\" y=\"" + num(y0 + 4) + "\" width=\"" + num(kPanel - 8) + "\" height=\"" +
           num(kPanel - 8) + "\" fill=\"none\" stroke=\"#bbbbbb\"/>\n";
    svg += polyline(s.truth_flat, "#1b7837");
    svg += polyline(s.predicted_flat, "#c51b7d");
    svg += text(x0 + 10, y0 + 18, s.label + ", ADE " + io::format_fixed(ade(s.predicted_flat, s.truth_flat), 2) + " m");
  }
  return svg + "</svg>\n";
}

std::string ablation_bar_chart_svg(const AblationTable& table) {
  constexpr double kLeft = 60.0, kTop = 40.0, kPlot = 260.0, kGroup = 110.0, kBar = 36.0;
  const double width = kLeft + kGroup * static_cast<double>(table.rows.size()) + 20.0;
  const double height = kTop + kPlot + 60.0;
  double top = 0.0;
  for (const auto& r : table.rows) {
    if (r.present) top = std::max({top, r.id_ade + r.id_ade_std, r.ood_ade + r.ood_ade_std});
  }
  top = top > 0.0 ? std::ceil(top) : 1.0;
  const double base = kTop + kPlot;
  auto y = [&](double v) { return base - kPlot * v / top; };

  std::string svg = header(width, height);
  svg += text(kLeft, 20, "ADE by variant (m)", "font-size=\"14\"");
  svg += "<rect x=\"" + num(width - 200) + "\" y=\"10\" width=\"12\" height=\"12\" fill=\"#4393c3\"/>\n" +
         text(width - 184, 21, "in-domain") + "<rect x=\"" + num(width - 110) +
         "\" y=\"10\" width=\"12\" height=\"12\" fill=\"#d6604d\"/>\n" + text(width - 94, 21, "OOD");
  for (int t = 0; t <= 4; ++t) {
    const double v = top * t / 4.0;
    svg += "<line x1=\"" + num(kLeft) + "\" x2=\"" + num(width - 20) + "\" y1=\"" + num(y(v)) + "\" y2=\"" + num(y(v)) +
           "\" stroke=\"#dddddd\"/>\n";
    svg += text(kLeft - 8, y(v) + 4, io::format_fixed(v, 2), "text-anchor=\"end\"");
  }
  svg += "<line x1=\"" + num(kLeft) + "\" x2=\"" + num(kLeft) + "\" y1=\"" + num(kTop) + "\" y2=\"" + num(base) +
         "\" stroke=\"black\"/>\n";

  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    const AblationRow& r = table.rows[i];
    const double gx = kLeft + kGroup * static_cast<double>(i) + 14.0;
    svg += text(gx + kBar, base + 18, pipelines::to_string(r.variant), "text-anchor=\"middle\"");
    if (!r.present) {
      svg += text(gx + kBar, base - 8, "absent", "text-anchor=\"middle\" fill=\"#888888\"");
      continue;
    }
    const double vals[2] = {r.id_ade, r.ood_ade};
    const double sds[2] = {r.id_ade_std, r.ood_ade_std};
    const char* colours[2] = {"#4393c3", "#d6604d"};
    for (int b = 0; b < 2; ++b) {
      const double x = gx + kBar * b;
      svg += "<rect x=\"" + num(x) + "\" y=\"" + num(y(vals[b])) + "\" width=\"" + num(kBar - 4) + "\" height=\"" +
             num(base - y(vals[b])) + "\" fill=\"" + colours[b] + "\"/>\n";
      if (sds[b] > 0.0) {
        const double mx = x + (kBar - 4) / 2;
        svg += "<line x1=\"" + num(mx) + "\" x2=\"" + num(mx) + "\" y1=\"" + num(y(vals[b] - sds[b])) + "\" y2=\"" +
               num(y(vals[b] + sds[b])) + "\" stroke=\"black\"/>\n";
      }
      svg += text(x + (kBar - 4) / 2, y(vals[b]) - 4, io::format_fixed(vals[b], 2),
                  "text-anchor=\"middle\" font-size=\"10\"");
    }
  }
  return svg + "</svg>\n";
}

}  // namespace nirm::eval
