#pragma once

#include <string>
#include <vector>

#include "idfprobe/report.h"

namespace idfprobe {

struct PlotSeries {
  std::string label;
  ReportTable table;
};

/// Mean correlation per layer, one polyline per series (embedding at x = 0).
std::string RenderLayerChart(const std::vector<PlotSeries>& series);

/// Mean correlation per head as grouped bars, one color per series.
std::string RenderHeadChart(const std::vector<PlotSeries>& series);

/// Dispatches on the report kind; all series must share it. Throws
/// std::invalid_argument on an empty list or mixed kinds.
std::string RenderChart(const std::vector<PlotSeries>& series);

}  // namespace idfprobe
