#pragma once

// Self-contained SVG plots of evaluation and training outputs.

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace cyclelab {

enum class PlotKind { sn, rh, log };

std::string_view to_string(PlotKind kind);
PlotKind plot_kind_from_string(std::string_view name);

struct Series {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
};

/// Parsed numeric CSV with a header row.
struct CsvTable {
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;

  [[nodiscard]] std::vector<double> column(std::string_view name) const;
};

/// Throws std::runtime_error on a missing file, ragged rows, non-numeric cells or no data rows.
CsvTable read_csv(const std::filesystem::path& path);

/// Reads the series a plot kind draws from one input: sn_curve.csv (or metrics.json) for sn,
/// rh.csv (or metrics.json) for rh, log.csv for log.
std::vector<Series> load_series(PlotKind kind, const std::filesystem::path& input, const std::string& label);

/// Line chart; one polyline with one vertex per point for each series.
std::string line_chart_svg(const std::vector<Series>& series, const std::string& title, const std::string& x_label,
                           const std::string& y_label);

/// Overlaid histograms of each series' y values over shared bins.
std::string histogram_svg(const std::vector<Series>& series, const std::string& title, const std::string& x_label,
                          int bins = 20);

/// Loads every input, renders, and writes `out` only if everything parsed.
void plot_files(PlotKind kind, const std::vector<std::filesystem::path>& inputs, const std::filesystem::path& out);

}  // namespace cyclelab
