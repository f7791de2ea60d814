#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace rdm {

struct PlotSeries {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
};

struct PlotSpec {
  std::string title;
  std::string x_label;
  std::string y_label;
  std::vector<PlotSeries> series;
};

/// Standalone SVG line chart: axes with tick labels, one polyline per series
/// and a legend. Non-finite points are skipped. An empty spec yields axes only.
std::string render_svg(const PlotSpec& spec);

/// Writes render_svg(spec) to `path`. Throws std::runtime_error naming the path
/// when the file cannot be written.
void emit_plot(const PlotSpec& spec, const std::filesystem::path& path);

}  // namespace rdm
