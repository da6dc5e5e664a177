#include "idfprobe/svg_plot.h"

#include <fmt/format.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace idfprobe {
namespace {

constexpr double kWidth = 640, kHeight = 400;
constexpr double kLeft = 64, kRight = 150, kTop = 36, kBottom = 56;
constexpr double kPlotW = kWidth - kLeft - kRight;
constexpr double kPlotH = kHeight - kTop - kBottom;
constexpr std::array<std::string_view, 8> kPalette = {
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728",
    "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"};

std::string_view Color(std::size_t i) { return kPalette[i % kPalette.size()]; }

std::string Escape(std::string_view s) {
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

struct YAxis {
  double lo = 0.0, hi = 1.0;
  double Map(double v) const { return kTop + (hi - v) / (hi - lo) * kPlotH; }
};

YAxis FitAxis(const std::vector<PlotSeries>& series, bool include_zero) {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (const auto& s : series) {
    for (const auto& r : s.table.rows) {
      if (std::isnan(r.mean)) continue;
      lo = std::min(lo, r.mean);
      hi = std::max(hi, r.mean);
    }
  }
  if (!std::isfinite(lo)) lo = hi = 0.0;
  YAxis axis;
  axis.lo = std::max(-1.0, std::floor(lo * 10.0) / 10.0 - 0.1);
  axis.hi = std::min(1.0, std::ceil(hi * 10.0) / 10.0 + 0.1);
  if (include_zero) {
    axis.lo = std::min(axis.lo, 0.0);
    axis.hi = std::max(axis.hi, 0.0);
  }
  if (axis.hi - axis.lo < 0.1) axis.hi = axis.lo + 0.1;
  return axis;
}

std::string Header(std::string_view title) {
  return fmt::format(
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{:.0f}\" height=\"{:.0f}\" "
      "viewBox=\"0 0 {:.0f} {:.0f}\" font-family=\"sans-serif\" font-size=\"12\">\n"
      "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
      "<text x=\"{:.2f}\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">{}</text>\n",
      kWidth, kHeight, kWidth, kHeight, kLeft + kPlotW / 2, Escape(title));
}

std::string YGrid(const YAxis& axis, std::string_view label) {
  std::string out;
  const double step = axis.hi - axis.lo <= 0.6 ? 0.1 : 0.2;
  const auto first = static_cast<long>(std::ceil(axis.lo / step - 1e-9));
  const auto last = static_cast<long>(std::floor(axis.hi / step + 1e-9));
  for (long k = first; k <= last; ++k) {
    const double v = static_cast<double>(k) * step;
    const double y = axis.Map(v);
    out += fmt::format(
        "<line x1=\"{:.2f}\" y1=\"{:.2f}\" x2=\"{:.2f}\" y2=\"{:.2f}\" stroke=\"#dddddd\"/>\n"
        "<text x=\"{:.2f}\" y=\"{:.2f}\" text-anchor=\"end\">{:.1f}</text>\n",
        kLeft, y, kLeft + kPlotW, y, kLeft - 6, y + 4, v == 0.0 ? 0.0 : v);
  }
  out += fmt::format(
      "<rect x=\"{:.2f}\" y=\"{:.2f}\" width=\"{:.2f}\" height=\"{:.2f}\" "
      "fill=\"none\" stroke=\"black\"/>\n",
      kLeft, kTop, kPlotW, kPlotH);
  out += fmt::format(
      "<text x=\"16\" y=\"{:.2f}\" text-anchor=\"middle\" "
      "transform=\"rotate(-90 16 {:.2f})\">{}</text>\n",
      kTop + kPlotH / 2, kTop + kPlotH / 2, Escape(label));
  return out;
}

std::string Legend(const std::vector<PlotSeries>& series) {
  std::string out;
  for (std::size_t i = 0; i < series.size(); ++i) {
    const double y = kTop + 10 + 20.0 * static_cast<double>(i);
    const double x = kLeft + kPlotW + 14;
    out += fmt::format(
        "<rect x=\"{:.2f}\" y=\"{:.2f}\" width=\"12\" height=\"12\" fill=\"{}\"/>\n"
        "<text x=\"{:.2f}\" y=\"{:.2f}\">{}</text>\n",
        x, y - 10, Color(i), x + 18, y, Escape(series[i].label));
  }
  return out;
}

}  // namespace

std::string RenderLayerChart(const std::vector<PlotSeries>& series) {
  int max_index = 0;
  for (const auto& s : series) {
    for (const auto& r : s.table.rows) {
      max_index = std::max(max_index, LayerTag::Parse(r.label).index);
    }
  }
  const double span = std::max(1, max_index);
  auto x_of = [&](int index) { return kLeft + 20 + (kPlotW - 40) * index / span; };
  const YAxis axis = FitAxis(series, false);

  std::string out = Header("IDF probing correlation by layer");
  out += YGrid(axis, "mean Pearson correlation");
  for (int i = 0; i <= max_index; ++i) {
    out += fmt::format("<text x=\"{:.2f}\" y=\"{:.2f}\" text-anchor=\"middle\">{}</text>\n",
                       x_of(i), kTop + kPlotH + 18, i == 0 ? "emb" : std::to_string(i));
  }
  out += fmt::format("<text x=\"{:.2f}\" y=\"{:.2f}\" text-anchor=\"middle\">layer</text>\n",
                     kLeft + kPlotW / 2, kHeight - 12);
  for (std::size_t si = 0; si < series.size(); ++si) {
    std::string points;
    std::string markers;
    for (const auto& r : series[si].table.rows) {
      if (std::isnan(r.mean)) continue;
      const double x = x_of(LayerTag::Parse(r.label).index);
      const double y = axis.Map(r.mean);
      if (!points.empty()) points += ' ';
      points += fmt::format("{:.2f},{:.2f}", x, y);
      markers += fmt::format("<circle cx=\"{:.2f}\" cy=\"{:.2f}\" r=\"3\" fill=\"{}\"/>\n",
                             x, y, Color(si));
    }
    out += fmt::format(
        "<polyline fill=\"none\" stroke=\"{}\" stroke-width=\"2\" points=\"{}\"/>\n",
        Color(si), points);
    out += markers;
  }
  out += Legend(series);
  out += "</svg>\n";
  return out;
}

std::string RenderHeadChart(const std::vector<PlotSeries>& series) {
  std::size_t heads = 0;
  for (const auto& s : series) {
    for (const auto& r : s.table.rows) heads = std::max(heads, std::stoul(r.label));
  }
  heads = std::max<std::size_t>(heads, 1);
  const YAxis axis = FitAxis(series, true);
  const double group = kPlotW / static_cast<double>(heads);
  const double bar = group * 0.8 / static_cast<double>(std::max<std::size_t>(series.size(), 1));

  std::string out = Header("CLS attention vs. IDF correlation by head");
  out += YGrid(axis, "mean Pearson correlation");
  const double zero = axis.Map(0.0);
  for (std::size_t h = 1; h <= heads; ++h) {
    out += fmt::format("<text x=\"{:.2f}\" y=\"{:.2f}\" text-anchor=\"middle\">{}</text>\n",
                       kLeft + group * (static_cast<double>(h) - 0.5),
                       kTop + kPlotH + 18, h);
  }
  out += fmt::format("<text x=\"{:.2f}\" y=\"{:.2f}\" text-anchor=\"middle\">head</text>\n",
                     kLeft + kPlotW / 2, kHeight - 12);
  for (std::size_t si = 0; si < series.size(); ++si) {
    for (const auto& r : series[si].table.rows) {
      if (std::isnan(r.mean)) continue;
      const double h = static_cast<double>(std::stoul(r.label));
      const double x = kLeft + group * (h - 1) + group * 0.1 + bar * static_cast<double>(si);
      const double y = axis.Map(r.mean);
      out += fmt::format(
          "<rect x=\"{:.2f}\" y=\"{:.2f}\" width=\"{:.2f}\" height=\"{:.2f}\" fill=\"{}\"/>\n",
          x, std::min(y, zero), bar, std::abs(zero - y), Color(si));
    }
  }
  out += fmt::format(
      "<line x1=\"{:.2f}\" y1=\"{:.2f}\" x2=\"{:.2f}\" y2=\"{:.2f}\" stroke=\"black\"/>\n",
      kLeft, zero, kLeft + kPlotW, zero);
  out += Legend(series);
  out += "</svg>\n";
  return out;
}

std::string RenderChart(const std::vector<PlotSeries>& series) {
  if (series.empty()) throw std::invalid_argument("no series to plot");
  const ReportKind kind = series.front().table.kind;
  for (const auto& s : series) {
    if (s.table.kind != kind) {
      throw std::invalid_argument("cannot mix layer and head reports in one plot");
    }
  }
  return kind == ReportKind::kLayer ? RenderLayerChart(series) : RenderHeadChart(series);
}

}  // namespace idfprobe
