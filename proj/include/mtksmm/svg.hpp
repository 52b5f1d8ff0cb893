#pragma once

#include <string>
#include <vector>

namespace mtksmm::svg {

/// One data series. `err` is either empty or one half-height per point;
/// bars are drawn only for positive entries.
struct Series {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
  std::vector<double> err;
  /// Connect points with a polyline; otherwise draw markers only.
  bool line = true;
};

struct Plot {
  std::string title;
  std::string x_label;
  std::string y_label;
  int width = 640;
  int height = 420;
};

/// Renders a self-contained SVG document. Output depends only on the inputs
/// (fixed number formatting, no timestamps). Throws std::invalid_argument if
/// a series has mismatched lengths.
std::string render(const Plot& plot, const std::vector<Series>& series);

/// Writes `render(plot, series)` to `path`; throws std::runtime_error on IO failure.
void write(const std::string& path, const Plot& plot, const std::vector<Series>& series);

}  // namespace mtksmm::svg
