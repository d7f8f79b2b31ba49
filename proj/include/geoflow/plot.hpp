#pragma once

#include <optional>
#include <string>
#include <vector>

namespace geoflow {

/// One plottable two-column series.
struct PlotSeries {
  enum class Style { Scatter, Line };
  std::string name;  ///< file stem and selector, e.g. "poincare"
  std::string title;
  std::string x_label;  ///< CSV column names
  std::string y_label;
  std::vector<double> x;
  std::vector<double> y;
  std::vector<double> markers;  ///< x positions drawn as vertical marker lines
  Style style = Style::Line;
};

struct PlotOutput {
  std::vector<std::string> files;
  std::vector<std::string> warnings;
};

/// CSV (header x_label,y_label) and SVG per series into `dir`. With
/// `requested`, only those names are emitted; names without a series are
/// reported in the warnings and skipped.
PlotOutput emit_plot_data(const std::vector<PlotSeries>& available,
                          const std::optional<std::vector<std::string>>& requested, const std::string& dir);

std::string series_csv(const PlotSeries& s);
std::string series_svg(const PlotSeries& s);

}  // namespace geoflow
