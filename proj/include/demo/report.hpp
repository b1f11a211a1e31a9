#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "demo/tensor.hpp"

namespace demo {

// Analytic per-worker traffic for a grid of (s, k), next to the dense
// gradient size. MB means 10^6 bytes.
struct DataTxRow {
  std::size_t s = 0;
  std::size_t k = 0;
  std::uint64_t payload_bytes = 0;
  std::uint64_t frame_bytes = 0;
  std::uint64_t dense_bytes = 0;

  double payload_mb() const { return static_cast<double>(payload_bytes) / 1e6; }
  double ratio() const { return static_cast<double>(payload_bytes) / static_cast<double>(dense_bytes); }
};

std::vector<DataTxRow> data_tx_table(const std::vector<Shape>& param_shapes,
                                     const std::vector<std::size_t>& s_values,
                                     const std::vector<std::size_t>& k_values, int world_size);

// Columns: s,k,payload_bytes,frame_bytes,payload_mb,dense_bytes,ratio
void write_data_tx_csv(std::ostream& os, const std::vector<DataTxRow>& rows);

struct PlotSeries {
  std::string label;
  std::vector<std::pair<double, double>> points;
};

// Reads two columns of a CSV with a header row. Rows with an empty y cell
// are skipped. Throws UsageError if the file has no usable rows.
PlotSeries read_csv_series(const std::filesystem::path& path, const std::string& x_column,
                           const std::string& y_column);

// One polyline per series, shared axes, legend in the corner.
std::string render_svg(const std::vector<PlotSeries>& series, const std::string& x_label,
                       const std::string& y_label, bool log_y = false);

}  // namespace demo
