#include "demo/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <ostream>
#include <sstream>

#include "demo/collective.hpp"
#include "demo/errors.hpp"

namespace demo {

std::vector<DataTxRow> data_tx_table(const std::vector<Shape>& param_shapes,
                                     const std::vector<std::size_t>& s_values,
                                     const std::vector<std::size_t>& k_values, int world_size) {
  std::vector<DataTxRow> rows;
  for (std::size_t s : s_values) {
    std::vector<ChunkGeometry> geoms;
    for (const auto& shape : param_shapes) geoms.push_back(clamp_chunk_shape(shape, s));
    const std::uint64_t dense = dense_gradient_bytes(geoms);
    for (std::size_t k : k_values) {
      const TrafficEstimate t = bytes_per_step(geoms, k, world_size);
      rows.push_back({s, k, t.payload_bytes, t.frame_bytes, dense});
    }
  }
  return rows;
}

void write_data_tx_csv(std::ostream& os, const std::vector<DataTxRow>& rows) {
  os << "s,k,payload_bytes,frame_bytes,payload_mb,dense_bytes,ratio\n";
  char buf[64];
  for (const auto& r : rows) {
    os << r.s << ',' << r.k << ',' << r.payload_bytes << ',' << r.frame_bytes << ',';
    std::snprintf(buf, sizeof(buf), "%.6f", r.payload_mb());
    os << buf << ',' << r.dense_bytes << ',';
    std::snprintf(buf, sizeof(buf), "%.6g", r.ratio());
    os << buf << '\n';
  }
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

std::size_t column_index(const std::vector<std::string>& header, const std::string& name,
                         const std::filesystem::path& path) {
  const auto it = std::find(header.begin(), header.end(), name);
  if (it == header.end()) throw UsageError(path.string() + " has no column '" + name + "'");
  return static_cast<std::size_t>(it - header.begin());
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4g", v);
  return buf;
}

}  // namespace

PlotSeries read_csv_series(const std::filesystem::path& path, const std::string& x_column,
                           const std::string& y_column) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || line.empty()) throw UsageError(path.string() + " is empty");
  const auto header = split_csv_line(line);
  const std::size_t xi = column_index(header, x_column, path);
  const std::size_t yi = column_index(header, y_column, path);

  PlotSeries s;
  s.label = path.parent_path().filename().string();
  if (s.label.empty()) s.label = path.stem().string();
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto cells = split_csv_line(line);
    if (cells.size() <= std::max(xi, yi) || cells[xi].empty() || cells[yi].empty()) continue;
    try {
      s.points.emplace_back(std::stod(cells[xi]), std::stod(cells[yi]));
    } catch (const std::exception&) {
      throw UsageError(path.string() + ": cannot parse row '" + line + "'");
    }
  }
  if (s.points.empty()) throw UsageError(path.string() + " has no data rows");
  return s;
}

std::string render_svg(const std::vector<PlotSeries>& series, const std::string& x_label,
                       const std::string& y_label, bool log_y) {
  if (series.empty()) throw UsageError("nothing to plot");
  constexpr double kWidth = 720, kHeight = 440, kLeft = 70, kRight = 20, kTop = 20, kBottom = 50;
  const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};

  auto ty = [&](double y) { return log_y ? std::log10(std::max(y, 1e-300)) : y; };
  double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
  for (const auto& s : series) {
    for (auto [x, y] : s.points) {
      x0 = std::min(x0, x);
      x1 = std::max(x1, x);
      y0 = std::min(y0, ty(y));
      y1 = std::max(y1, ty(y));
    }
  }
  if (x1 == x0) x1 = x0 + 1;
  if (y1 == y0) y1 = y0 + 1;
  const double pw = kWidth - kLeft - kRight, ph = kHeight - kTop - kBottom;
  auto px = [&](double x) { return kLeft + (x - x0) / (x1 - x0) * pw; };
  auto py = [&](double y) { return kTop + (1.0 - (ty(y) - y0) / (y1 - y0)) * ph; };

  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\""
     << kHeight << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<rect x=\"" << kLeft << "\" y=\"" << kTop << "\" width=\"" << pw << "\" height=\"" << ph
     << "\" fill=\"none\" stroke=\"#444\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double fx = x0 + (x1 - x0) * i / 4.0;
    const double fy = y0 + (y1 - y0) * i / 4.0;
    os << "<text x=\"" << px(fx) << "\" y=\"" << kTop + ph + 16 << "\" text-anchor=\"middle\">"
       << num(fx) << "</text>\n";
    const double ylab = log_y ? std::pow(10.0, fy) : fy;
    os << "<text x=\"" << kLeft - 6 << "\" y=\"" << kTop + (1.0 - i / 4.0) * ph + 4
       << "\" text-anchor=\"end\">" << num(ylab) << "</text>\n";
  }
  os << "<text x=\"" << kLeft + pw / 2 << "\" y=\"" << kHeight - 10 << "\" text-anchor=\"middle\">"
     << escape(x_label) << "</text>\n";
  os << "<text transform=\"translate(16," << kTop + ph / 2
     << ") rotate(-90)\" text-anchor=\"middle\">" << escape(y_label) << "</text>\n";

  for (std::size_t i = 0; i < series.size(); ++i) {
    const char* color = palette[i % std::size(palette)];
    os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
    for (auto [x, y] : series[i].points) os << num(px(x)) << ',' << num(py(y)) << ' ';
    os << "\"/>\n";
    os << "<text x=\"" << kLeft + pw - 8 << "\" y=\"" << kTop + 16 + 14 * static_cast<double>(i)
       << "\" text-anchor=\"end\" fill=\"" << color << "\">" << escape(series[i].label)
       << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

}  // namespace demo
