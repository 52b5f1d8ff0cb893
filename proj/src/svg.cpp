#include "mtksmm/svg.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace mtksmm::svg {

namespace {

constexpr std::array<const char*, 6> kPalette{"#1f77b4", "#d62728", "#2ca02c",
                                              "#ff7f0e", "#9467bd", "#8c564b"};
constexpr double kMarginLeft = 64.0;
constexpr double kMarginRight = 140.0;
constexpr double kMarginTop = 36.0;
constexpr double kMarginBottom = 48.0;
constexpr int kTicks = 5;

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

std::string tick_label(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4g", std::abs(v) < 1e-12 ? 0.0 : v);
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

struct Range {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();

  void add(double v) {
    if (!std::isfinite(v)) return;
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  void finish() {
    if (!(lo <= hi)) {
      lo = 0.0;
      hi = 1.0;
    }
    if (hi - lo < 1e-12) {
      const double pad = std::max(std::abs(lo) * 0.1, 0.5);
      lo -= pad;
      hi += pad;
    } else {
      const double pad = 0.05 * (hi - lo);
      lo -= pad;
      hi += pad;
    }
  }
};

}  // namespace

std::string render(const Plot& plot, const std::vector<Series>& series) {
  Range xr;
  Range yr;
  for (const Series& s : series) {
    if (s.x.size() != s.y.size() || (!s.err.empty() && s.err.size() != s.y.size())) {
      throw std::invalid_argument("svg: series '" + s.label + "' has mismatched lengths");
    }
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      xr.add(s.x[i]);
      const double e = s.err.empty() ? 0.0 : std::max(0.0, s.err[i]);
      yr.add(s.y[i] - e);
      yr.add(s.y[i] + e);
    }
  }
  xr.finish();
  yr.finish();

  const double w = plot.width;
  const double h = plot.height;
  const double pw = w - kMarginLeft - kMarginRight;
  const double ph = h - kMarginTop - kMarginBottom;
  auto px = [&](double x) { return kMarginLeft + (x - xr.lo) / (xr.hi - xr.lo) * pw; };
  auto py = [&](double y) { return kMarginTop + (1.0 - (y - yr.lo) / (yr.hi - yr.lo)) * ph; };

  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << plot.width << "\" height=\""
    << plot.height << "\" viewBox=\"0 0 " << plot.width << ' ' << plot.height << "\">\n";
  o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  o << "<text x=\"" << num(w / 2) << "\" y=\"22\" text-anchor=\"middle\" font-family=\"sans-serif\""
    << " font-size=\"15\">" << escape(plot.title) << "</text>\n";
  o << "<rect x=\"" << num(kMarginLeft) << "\" y=\"" << num(kMarginTop) << "\" width=\"" << num(pw)
    << "\" height=\"" << num(ph) << "\" fill=\"none\" stroke=\"black\"/>\n";

  for (int t = 0; t <= kTicks; ++t) {
    const double fx = xr.lo + (xr.hi - xr.lo) * t / kTicks;
    const double fy = yr.lo + (yr.hi - yr.lo) * t / kTicks;
    o << "<line x1=\"" << num(px(fx)) << "\" y1=\"" << num(kMarginTop + ph) << "\" x2=\""
      << num(px(fx)) << "\" y2=\"" << num(kMarginTop + ph + 5) << "\" stroke=\"black\"/>\n";
    o << "<text x=\"" << num(px(fx)) << "\" y=\"" << num(kMarginTop + ph + 18)
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">"
      << tick_label(fx) << "</text>\n";
    o << "<line x1=\"" << num(kMarginLeft - 5) << "\" y1=\"" << num(py(fy)) << "\" x2=\""
      << num(kMarginLeft) << "\" y2=\"" << num(py(fy)) << "\" stroke=\"black\"/>\n";
    o << "<text x=\"" << num(kMarginLeft - 8) << "\" y=\"" << num(py(fy) + 4)
      << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">" << tick_label(fy)
      << "</text>\n";
  }
  o << "<text x=\"" << num(kMarginLeft + pw / 2) << "\" y=\"" << num(h - 10)
    << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\">"
    << escape(plot.x_label) << "</text>\n";
  o << "<text x=\"16\" y=\"" << num(kMarginTop + ph / 2)
    << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\" transform=\"rotate(-90 16 "
    << num(kMarginTop + ph / 2) << ")\">" << escape(plot.y_label) << "</text>\n";

  for (std::size_t si = 0; si < series.size(); ++si) {
    const Series& s = series[si];
    const char* color = kPalette[si % kPalette.size()];
    o << "<g stroke=\"" << color << "\" fill=\"" << color << "\">\n";
    if (s.line && s.x.size() > 1) {
      o << "<polyline fill=\"none\" stroke-width=\"1.5\" points=\"";
      for (std::size_t i = 0; i < s.x.size(); ++i) {
        o << (i ? " " : "") << num(px(s.x[i])) << ',' << num(py(s.y[i]));
      }
      o << "\"/>\n";
    }
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
      const double cx = px(s.x[i]);
      const double cy = py(s.y[i]);
      if (!s.err.empty() && s.err[i] > 0.0) {
        const double lo = py(s.y[i] - s.err[i]);
        const double hi = py(s.y[i] + s.err[i]);
        o << "<line x1=\"" << num(cx) << "\" y1=\"" << num(lo) << "\" x2=\"" << num(cx)
          << "\" y2=\"" << num(hi) << "\"/>\n";
        o << "<line x1=\"" << num(cx - 4) << "\" y1=\"" << num(lo) << "\" x2=\"" << num(cx + 4)
          << "\" y2=\"" << num(lo) << "\"/>\n";
        o << "<line x1=\"" << num(cx - 4) << "\" y1=\"" << num(hi) << "\" x2=\"" << num(cx + 4)
          << "\" y2=\"" << num(hi) << "\"/>\n";
      }
      o << "<circle cx=\"" << num(cx) << "\" cy=\"" << num(cy) << "\" r=\""
        << (s.line ? "3" : "1.6") << "\" stroke=\"none\"/>\n";
    }
    o << "</g>\n";
    const double ly = kMarginTop + 14.0 + 18.0 * static_cast<double>(si);
    o << "<rect x=\"" << num(w - kMarginRight + 12) << "\" y=\"" << num(ly - 9)
      << "\" width=\"12\" height=\"12\" fill=\"" << color << "\"/>\n";
    o << "<text x=\"" << num(w - kMarginRight + 30) << "\" y=\"" << num(ly + 1)
      << "\" font-family=\"sans-serif\" font-size=\"12\">" << escape(s.label) << "</text>\n";
  }
  o << "</svg>\n";
  return o.str();
}

void write(const std::string& path, const Plot& plot, const std::vector<Series>& series) {
  const std::string doc = render(plot, series);
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  out << doc;
  if (!out) throw std::runtime_error("write failed for '" + path + "'");
}

}  // namespace mtksmm::svg
