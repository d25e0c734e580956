// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <sstream>

#include "gradalign/report.hpp"

namespace gradalign {

namespace {

struct Series {
  std::string label;
  std::vector<std::pair<double, double>> points;
};

constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2"};

std::string line_chart(const std::string& title, const std::string& x_label, const std::string& y_label,
                       const std::vector<Series>& series) {
  constexpr double kW = 720, kH = 440, kLeft = 70, kRight = 180, kTop = 40, kBottom = 60;
  double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
  for (const auto& s : series)
    for (auto [x, y] : s.points) {
      x0 = std::min(x0, x), x1 = std::max(x1, x);
      y0 = std::min(y0, y), y1 = std::max(y1, y);
    }
  if (!(x1 > x0)) x1 = x0 + 1;
  if (!(y1 > y0)) y1 = y0 + 1;
  const double pw = kW - kLeft - kRight, ph = kH - kTop - kBottom;
  auto px = [&](double x) { return kLeft + (x - x0) / (x1 - x0) * pw; };
  auto py = [&](double y) { return kTop + (1.0 - (y - y0) / (y1 - y0)) * ph; };

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kW << "\" height=\"" << kH
      << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg << "<text x=\"" << kW / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" << title << "</text>\n";
  svg << "<rect x=\"" << kLeft << "\" y=\"" << kTop << "\" width=\"" << pw << "\" height=\"" << ph
      << "\" fill=\"none\" stroke=\"#444\"/>\n";
  for (int t = 0; t <= 4; ++t) {
    const double xv = x0 + (x1 - x0) * t / 4.0, yv = y0 + (y1 - y0) * t / 4.0;
    svg << "<text x=\"" << px(xv) << "\" y=\"" << kTop + ph + 18 << "\" text-anchor=\"middle\">"
        << format_double(std::round(xv * 100) / 100) << "</text>\n";
    svg << "<text x=\"" << kLeft - 6 << "\" y=\"" << py(yv) + 4 << "\" text-anchor=\"end\">"
        << format_double(std::round(yv * 100) / 100) << "</text>\n";
  }
  svg << "<text x=\"" << kLeft + pw / 2 << "\" y=\"" << kH - 15 << "\" text-anchor=\"middle\">" << x_label
      << "</text>\n";
  svg << "<text transform=\"translate(18," << kTop + ph / 2 << ") rotate(-90)\" text-anchor=\"middle\">" << y_label
      << "</text>\n";
  for (std::size_t i = 0; i < series.size(); ++i) {
    const char* color = kPalette[i % std::size(kPalette)];
    svg << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
    for (auto [x, y] : series[i].points) svg << px(x) << ',' << py(y) << ' ';
    svg << "\"/>\n";
    const double ly = kTop + 14 + 18.0 * static_cast<double>(i);
    svg << "<line x1=\"" << kW - kRight + 12 << "\" y1=\"" << ly - 4 << "\" x2=\"" << kW - kRight + 32 << "\" y2=\""
        << ly - 4 << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
    svg << "<text x=\"" << kW - kRight + 38 << "\" y=\"" << ly << "\">" << series[i].label << "</text>\n";
  }
  svg << "</svg>\n";
  return svg.str();
}

}  // namespace

std::string angles_svg(const std::vector<TraceRow>& trace) {
  // (label) -> step -> (sum, count)
  std::map<std::string, std::map<std::size_t, std::pair<double, int>>> acc;
  for (const auto& r : trace) {
    std::string label = r.rule;
    if (r.rule == "PROGRAD") label += " l=" + format_double(r.lambda);
    label += " " + std::to_string(r.shots) + "-shot";
    auto& cell = acc[label][r.step.step];
    cell.first += r.step.angle_deg;
    cell.second += 1;
  }
  std::vector<Series> series;
  for (const auto& [label, steps] : acc) {
    Series s{label, {}};
    for (const auto& [step, sum] : steps) s.points.emplace_back(static_cast<double>(step), sum.first / sum.second);
    series.push_back(std::move(s));
  }
  return line_chart("Angle between CE and KL gradients", "step", "angle (deg)", series);
}

std::string accuracy_svg(const std::vector<AggregateRow>& aggregates) {
  std::map<std::string, Series> by_rule;
  for (const auto& a : aggregates) {
    std::string label = a.rule;
    if (a.rule == "PROGRAD") label += " l=" + format_double(a.lambda);
    if (a.rule == "L2REG") label += " a=" + format_double(a.alpha);
    if (a.gap_rotation_deg != 0.0 || a.gap_shift != 0.0)
      label += " gap=" + format_double(a.gap_rotation_deg) + "/" + format_double(a.gap_shift);
    auto& s = by_rule[label];
    s.label = label;
    s.points.emplace_back(static_cast<double>(a.shots), a.acc_overall.mean);
  }
  std::vector<Series> series;
  for (auto& [label, s] : by_rule) {
    std::sort(s.points.begin(), s.points.end());
    series.push_back(std::move(s));
  }
  return line_chart("Mean test accuracy", "shots", "accuracy", series);
}

}  // namespace gradalign
