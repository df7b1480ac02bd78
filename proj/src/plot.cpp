#include "cyclelab/plot.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace cyclelab {

namespace fs = std::filesystem;

std::string_view to_string(PlotKind kind) {
  switch (kind) {
    case PlotKind::sn: return "sn";
    case PlotKind::rh: return "rh";
    case PlotKind::log: return "log";
  }
  return "?";
}

PlotKind plot_kind_from_string(std::string_view name) {
  if (name == "sn") return PlotKind::sn;
  if (name == "rh") return PlotKind::rh;
  if (name == "log") return PlotKind::log;
  throw std::invalid_argument("unknown plot kind '" + std::string(name) + "' (sn|rh|log)");
}

std::vector<double> CsvTable::column(std::string_view name) const {
  const auto it = std::find(columns.begin(), columns.end(), name);
  if (it == columns.end()) throw std::runtime_error("CSV has no column '" + std::string(name) + "'");
  const auto k = static_cast<std::size_t>(it - columns.begin());
  std::vector<double> out;
  out.reserve(rows.size());
  for (const auto& r : rows) out.push_back(r[k]);
  return out;
}

namespace {

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> cells;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

}  // namespace

CsvTable read_csv(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot read " + path.string());
  CsvTable t;
  std::string line;
  if (!std::getline(is, line) || line.empty()) throw std::runtime_error(path.string() + " is empty");
  t.columns = split(line);
  int line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto cells = split(line);
    if (cells.size() != t.columns.size()) {
      throw std::runtime_error(path.string() + ":" + std::to_string(line_no) + ": expected " +
                               std::to_string(t.columns.size()) + " fields");
    }
    std::vector<double> row;
    for (const auto& c : cells) {
      std::size_t used = 0;
      double v = 0;
      try {
        v = std::stod(c, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used == 0 || used != c.size()) {
        throw std::runtime_error(path.string() + ":" + std::to_string(line_no) + ": non-numeric value '" + c + "'");
      }
      row.push_back(v);
    }
    t.rows.push_back(std::move(row));
  }
  if (t.rows.empty()) throw std::runtime_error(path.string() + " has no data rows");
  return t;
}

namespace {

nlohmann::json read_json(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot read " + path.string());
  try {
    return nlohmann::json::parse(is);
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(path.string() + ": " + e.what());
  }
}

std::vector<double> json_numbers(const nlohmann::json& j, const fs::path& path, const char* what) {
  try {
    auto v = j.get<std::vector<double>>();
    if (v.empty()) throw std::runtime_error(path.string() + ": " + what + " is empty");
    return v;
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(path.string() + ": malformed " + what + ": " + e.what());
  }
}

// Averages consecutive points so long training logs stay a few hundred vertices.
Series downsample(Series s, std::size_t max_points) {
  if (s.x.size() <= max_points) return s;
  const std::size_t group = (s.x.size() + max_points - 1) / max_points;
  Series out{s.label, {}, {}};
  for (std::size_t i = 0; i < s.x.size(); i += group) {
    const std::size_t end = std::min(s.x.size(), i + group);
    double sx = 0, sy = 0;
    for (std::size_t k = i; k < end; ++k) {
      sx += s.x[k];
      sy += s.y[k];
    }
    out.x.push_back(sx / static_cast<double>(end - i));
    out.y.push_back(sy / static_cast<double>(end - i));
  }
  return out;
}

}  // namespace

std::vector<Series> load_series(PlotKind kind, const fs::path& input, const std::string& label) {
  const bool is_json = input.extension() == ".json";
  switch (kind) {
    case PlotKind::sn: {
      if (is_json) {
        const auto j = read_json(input);
        if (!j.contains("sn")) throw std::runtime_error(input.string() + " has no sn entry");
        Series s{label, json_numbers(j["sn"].value("grid", nlohmann::json()), input, "sn grid"),
                 json_numbers(j["sn"].value("values", nlohmann::json()), input, "sn values")};
        if (s.x.size() != s.y.size()) throw std::runtime_error(input.string() + ": sn grid and values differ in length");
        return {s};
      }
      const CsvTable t = read_csv(input);
      return {Series{label, t.column("sigma"), t.column("value")}};
    }
    case PlotKind::rh: {
      std::vector<double> values;
      if (is_json) {
        const auto j = read_json(input);
        if (!j.contains("rh")) throw std::runtime_error(input.string() + " has no rh entry");
        values = json_numbers(j["rh"].value("values", nlohmann::json()), input, "rh values");
      } else {
        values = read_csv(input).column("value");
      }
      std::vector<double> index(values.size());
      for (std::size_t i = 0; i < index.size(); ++i) index[i] = static_cast<double>(i);
      return {Series{label, index, values}};
    }
    case PlotKind::log: {
      const CsvTable t = read_csv(input);
      const auto iter = t.column("iter");
      std::vector<Series> out;
      for (const char* col : {"total", "cyc_A", "cyc_B"}) {
        out.push_back(downsample(Series{label + " " + col, iter, t.column(col)}, 400));
      }
      return out;
    }
  }
  return {};
}

namespace {

constexpr double kWidth = 720, kHeight = 440;
constexpr double kLeft = 70, kRight = 200, kTop = 40, kBottom = 50;
constexpr const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
                                   "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

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

struct Frame {
  double x0, x1, y0, y1;
  [[nodiscard]] double px(double x) const { return kLeft + (x - x0) / (x1 - x0) * (kWidth - kLeft - kRight); }
  [[nodiscard]] double py(double y) const { return kHeight - kBottom - (y - y0) / (y1 - y0) * (kHeight - kTop - kBottom); }
};

void widen(double& lo, double& hi) {
  if (!(hi > lo)) {
    const double pad = lo == 0 ? 1.0 : std::abs(lo) * 0.1;
    lo -= pad;
    hi += pad;
  }
}

std::string open_svg(const std::string& title) {
  std::string s = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(kWidth) + "\" height=\"" + num(kHeight) +
                  "\" viewBox=\"0 0 " + num(kWidth) + " " + num(kHeight) + "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  s += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  s += "<text x=\"" + num(kWidth / 2) + "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" + escape(title) + "</text>\n";
  return s;
}

std::string axes(const Frame& f, const std::string& x_label, const std::string& y_label) {
  std::string s;
  const double bx = kLeft, by = kHeight - kBottom, ex = kWidth - kRight, ty = kTop;
  s += "<g stroke=\"black\" fill=\"none\"><line x1=\"" + num(bx) + "\" y1=\"" + num(by) + "\" x2=\"" + num(ex) +
       "\" y2=\"" + num(by) + "\"/><line x1=\"" + num(bx) + "\" y1=\"" + num(by) + "\" x2=\"" + num(bx) + "\" y2=\"" +
       num(ty) + "\"/></g>\n";
  for (int k = 0; k <= 4; ++k) {
    const double xv = f.x0 + (f.x1 - f.x0) * k / 4.0;
    const double yv = f.y0 + (f.y1 - f.y0) * k / 4.0;
    s += "<text x=\"" + num(f.px(xv)) + "\" y=\"" + num(by + 16) + "\" text-anchor=\"middle\">" + num(xv) + "</text>\n";
    s += "<text x=\"" + num(bx - 6) + "\" y=\"" + num(f.py(yv) + 4) + "\" text-anchor=\"end\">" + num(yv) + "</text>\n";
  }
  s += "<text x=\"" + num((bx + ex) / 2) + "\" y=\"" + num(kHeight - 12) + "\" text-anchor=\"middle\">" +
       escape(x_label) + "</text>\n";
  if (!y_label.empty()) {
    s += "<text x=\"16\" y=\"" + num((by + ty) / 2) + "\" text-anchor=\"middle\" transform=\"rotate(-90 16 " +
         num((by + ty) / 2) + ")\">" + escape(y_label) + "</text>\n";
  }
  return s;
}

std::string legend(const std::vector<Series>& series) {
  std::string s;
  for (std::size_t i = 0; i < series.size(); ++i) {
    const double y = kTop + 10 + 18.0 * static_cast<double>(i);
    const char* color = kColors[i % std::size(kColors)];
    s += "<g class=\"legend\"><rect x=\"" + num(kWidth - kRight + 12) + "\" y=\"" + num(y - 9) +
         "\" width=\"12\" height=\"10\" fill=\"" + color + "\"/><text x=\"" + num(kWidth - kRight + 30) + "\" y=\"" +
         num(y) + "\">" + escape(series[i].label) + "</text></g>\n";
  }
  return s;
}

void require_series(const std::vector<Series>& series) {
  if (series.empty()) throw std::invalid_argument("nothing to plot");
  for (const auto& s : series) {
    if (s.x.empty() || s.x.size() != s.y.size()) throw std::invalid_argument("series '" + s.label + "' is empty or ragged");
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) {
        throw std::invalid_argument("series '" + s.label + "' has non-finite values");
      }
    }
  }
}

}  // namespace

std::string line_chart_svg(const std::vector<Series>& series, const std::string& title, const std::string& x_label,
                           const std::string& y_label) {
  require_series(series);
  Frame f{series[0].x[0], series[0].x[0], series[0].y[0], series[0].y[0]};
  for (const auto& s : series) {
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      f.x0 = std::min(f.x0, s.x[i]);
      f.x1 = std::max(f.x1, s.x[i]);
      f.y0 = std::min(f.y0, s.y[i]);
      f.y1 = std::max(f.y1, s.y[i]);
    }
  }
  f.y0 = std::min(f.y0, 0.0);
  widen(f.x0, f.x1);
  widen(f.y0, f.y1);
  std::string svg = open_svg(title) + axes(f, x_label, y_label);
  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto& s = series[k];
    svg += "<polyline class=\"series\" fill=\"none\" stroke-width=\"1.5\" stroke=\"" +
           std::string(kColors[k % std::size(kColors)]) + "\" points=\"";
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (i > 0) svg += ' ';
      svg += num(f.px(s.x[i])) + "," + num(f.py(s.y[i]));
    }
    svg += "\"><title>" + escape(s.label) + "</title></polyline>\n";
  }
  return svg + legend(series) + "</svg>\n";
}

std::string histogram_svg(const std::vector<Series>& series, const std::string& title, const std::string& x_label,
                          int bins) {
  require_series(series);
  if (bins < 1) throw std::invalid_argument("histogram needs at least one bin");
  double lo = series[0].y[0], hi = lo;
  for (const auto& s : series) {
    for (double v : s.y) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  }
  widen(lo, hi);
  const double width = (hi - lo) / bins;
  std::vector<std::vector<int>> counts(series.size(), std::vector<int>(static_cast<std::size_t>(bins), 0));
  int peak = 1;
  for (std::size_t k = 0; k < series.size(); ++k) {
    for (double v : series[k].y) {
      const int b = std::clamp(static_cast<int>((v - lo) / width), 0, bins - 1);
      peak = std::max(peak, ++counts[k][b]);
    }
  }
  const Frame f{lo, hi, 0.0, static_cast<double>(peak)};
  std::string svg = open_svg(title) + axes(f, x_label, "count");
  for (std::size_t k = 0; k < series.size(); ++k) {
    const char* color = kColors[k % std::size(kColors)];
    svg += "<g class=\"series\" fill=\"" + std::string(color) + "\" fill-opacity=\"0.45\" stroke=\"" + color + "\">";
    svg += "<title>" + escape(series[k].label) + "</title>\n";
    for (int b = 0; b < bins; ++b) {
      if (counts[k][b] == 0) continue;
      const double x0 = f.px(lo + b * width), x1 = f.px(lo + (b + 1) * width);
      const double y1 = f.py(counts[k][b]);
      svg += "<rect x=\"" + num(x0) + "\" y=\"" + num(y1) + "\" width=\"" + num(x1 - x0) + "\" height=\"" +
             num(f.py(0) - y1) + "\"/>\n";
    }
    svg += "</g>\n";
  }
  return svg + legend(series) + "</svg>\n";
}

void plot_files(PlotKind kind, const std::vector<fs::path>& inputs, const fs::path& out) {
  if (inputs.empty()) throw std::invalid_argument("plot needs at least one input");
  std::vector<Series> all;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    std::string label = inputs[i].parent_path().filename().string();
    if (label.empty() || label == ".") label = inputs[i].stem().string();
    if (inputs.size() > 1) {
      for (std::size_t j = 0; j < inputs.size(); ++j) {
        if (j != i && inputs[j].parent_path().filename() == inputs[i].parent_path().filename()) {
          label = inputs[i].parent_path().filename().string() + "/" + inputs[i].stem().string();
          break;
        }
      }
    }
    for (auto& s : load_series(kind, inputs[i], label)) all.push_back(std::move(s));
  }
  std::string svg;
  switch (kind) {
    case PlotKind::sn: svg = line_chart_svg(all, "Sensitivity to noise", "sigma", "SN(sigma)"); break;
    case PlotKind::rh: svg = histogram_svg(all, "Reconstruction honesty per sample", "RH"); break;
    case PlotKind::log: svg = line_chart_svg(all, "Training losses", "iteration", "loss"); break;
  }
  std::ofstream os(out, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write " + out.string());
  os << svg;
  if (!os) throw std::runtime_error("failed writing " + out.string());
}

}  // namespace cyclelab
