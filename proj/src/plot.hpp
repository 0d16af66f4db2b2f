#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "csv.hpp"

namespace geolearn::cli {

enum class PlotKind { Line, Heatmap };

/// Plot description. Keys: kind (line|heatmap), x, y (column or list of
/// columns for line plots), value (heatmap colour column, numeric or
/// categorical), log_x, log_y, title, x_label, y_label, output.
struct PlotSpec {
  PlotKind kind = PlotKind::Line;
  std::string x;
  std::vector<std::string> y;
  std::string value;
  bool log_x = false;
  bool log_y = false;
  std::string title;
  std::string x_label;
  std::string y_label;
  std::optional<std::filesystem::path> output;
};

/// `spec` is a path to a YAML file or an inline YAML mapping such as
/// "{kind: line, x: step, y: loss, log_y: true}". Throws ConfigError.
PlotSpec parse_plot_spec(const std::string& spec);

std::string render_svg(const CsvData& data, const PlotSpec& spec);

/// Renders the CSV and writes the SVG next to it (or to spec.output).
std::filesystem::path emit_plot(const std::filesystem::path& csv, const PlotSpec& spec);

}  // namespace geolearn::cli
