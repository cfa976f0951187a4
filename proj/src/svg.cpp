#include "depthkit/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace depthkit {
namespace {

constexpr double kWidth = 640, kHeight = 400;
constexpr double kLeft = 70, kRight = 160, kTop = 40, kBottom = 60;
const char* const kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"};

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string tick(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
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
  double lo, hi;
  double map(double v, double a, double b) const { return a + (v - lo) / (hi - lo) * (b - a); }
};

Range padded(double lo, double hi) {
  if (!(hi > lo)) {
    const double d = std::max(std::abs(lo) * 0.1, 1e-9);
    return {lo - d, hi + d};
  }
  return {lo, hi};
}

std::string header(const std::string& title) {
  return "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(kWidth) + "\" height=\"" + num(kHeight) +
         "\" font-family=\"sans-serif\" font-size=\"11\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
         "<text x=\"" + num(kWidth / 2) + "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">" + escape(title) +
         "</text>\n";
}

std::string axes(const Range& y, const std::string& y_label) {
  const double x0 = kLeft, x1 = kWidth - kRight, y0 = kHeight - kBottom, y1 = kTop;
  std::string s = "<line x1=\"" + num(x0) + "\" y1=\"" + num(y0) + "\" x2=\"" + num(x1) + "\" y2=\"" + num(y0) +
                  "\" stroke=\"black\"/>\n<line x1=\"" + num(x0) + "\" y1=\"" + num(y0) + "\" x2=\"" + num(x0) +
                  "\" y2=\"" + num(y1) + "\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double v = y.lo + (y.hi - y.lo) * i / 4.0;
    const double py = y.map(v, y0, y1);
    s += "<line x1=\"" + num(x0 - 4) + "\" y1=\"" + num(py) + "\" x2=\"" + num(x0) + "\" y2=\"" + num(py) +
         "\" stroke=\"black\"/>\n<text x=\"" + num(x0 - 6) + "\" y=\"" + num(py + 4) + "\" text-anchor=\"end\">" +
         tick(v) + "</text>\n";
  }
  s += "<text x=\"16\" y=\"" + num((y0 + y1) / 2) + "\" text-anchor=\"middle\" transform=\"rotate(-90 16 " +
       num((y0 + y1) / 2) + ")\">" + escape(y_label) + "</text>\n";
  return s;
}

}  // namespace

std::string svg_line_chart(const std::string& title, const std::string& x_label, const std::string& y_label,
                           const std::vector<Series>& series) {
  double xlo = INFINITY, xhi = -INFINITY, ylo = INFINITY, yhi = -INFINITY;
  for (const auto& s : series) {
    for (double v : s.x) xlo = std::min(xlo, v), xhi = std::max(xhi, v);
    for (double v : s.y)
      if (std::isfinite(v)) ylo = std::min(ylo, v), yhi = std::max(yhi, v);
  }
  if (!std::isfinite(xlo)) xlo = 0, xhi = 1;
  if (!std::isfinite(ylo)) ylo = 0, yhi = 1;
  const Range xr = padded(xlo, xhi), yr = padded(std::min(0.0, ylo), yhi);
  const double x0 = kLeft, x1 = kWidth - kRight, y0 = kHeight - kBottom, y1 = kTop;

  std::string s = header(title) + axes(yr, y_label);
  for (int i = 0; i <= 4; ++i) {
    const double v = xr.lo + (xr.hi - xr.lo) * i / 4.0;
    const double px = xr.map(v, x0, x1);
    s += "<text x=\"" + num(px) + "\" y=\"" + num(y0 + 16) + "\" text-anchor=\"middle\">" + tick(v) + "</text>\n";
  }
  s += "<text x=\"" + num((x0 + x1) / 2) + "\" y=\"" + num(kHeight - 20) + "\" text-anchor=\"middle\">" +
       escape(x_label) + "</text>\n";
  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto& ser = series[k];
    const char* color = kPalette[k % std::size(kPalette)];
    s += "<polyline fill=\"none\" stroke=\"" + std::string(color) + "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < std::min(ser.x.size(), ser.y.size()); ++i) {
      if (!std::isfinite(ser.y[i])) continue;
      s += num(xr.map(ser.x[i], x0, x1)) + "," + num(yr.map(ser.y[i], y0, y1)) + " ";
    }
    s += "\"/>\n";
    const double ly = kTop + 16.0 * static_cast<double>(k);
    s += "<line x1=\"" + num(x1 + 10) + "\" y1=\"" + num(ly) + "\" x2=\"" + num(x1 + 30) + "\" y2=\"" + num(ly) +
         "\" stroke=\"" + color + "\" stroke-width=\"2\"/>\n<text x=\"" + num(x1 + 34) + "\" y=\"" + num(ly + 4) +
         "\">" + escape(ser.label) + "</text>\n";
  }
  return s + "</svg>\n";
}

std::string svg_bar_chart(const std::string& title, const std::string& y_label, const std::vector<std::string>& labels,
                          const std::vector<double>& values) {
  double hi = 0.0;
  for (double v : values)
    if (std::isfinite(v)) hi = std::max(hi, v);
  const Range yr = padded(0.0, hi);
  const double x0 = kLeft, x1 = kWidth - kRight, y0 = kHeight - kBottom, y1 = kTop;
  std::string s = header(title) + axes(yr, y_label);
  const double slot = (x1 - x0) / static_cast<double>(std::max<std::size_t>(1, values.size()));
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double v = std::isfinite(values[i]) ? values[i] : 0.0;
    const double top = yr.map(v, y0, y1);
    const double cx = x0 + slot * (static_cast<double>(i) + 0.5);
    s += "<rect x=\"" + num(cx - slot * 0.35) + "\" y=\"" + num(top) + "\" width=\"" + num(slot * 0.7) +
         "\" height=\"" + num(y0 - top) + "\" fill=\"" + kPalette[i % std::size(kPalette)] + "\"/>\n";
    s += "<text x=\"" + num(cx) + "\" y=\"" + num(top - 4) + "\" text-anchor=\"middle\" font-size=\"9\">" +
         tick(v) + "</text>\n";
    const std::string label = i < labels.size() ? labels[i] : std::string();
    s += "<text x=\"" + num(cx) + "\" y=\"" + num(y0 + 14) + "\" text-anchor=\"end\" transform=\"rotate(-30 " +
         num(cx) + " " + num(y0 + 14) + ")\">" + escape(label) + "</text>\n";
  }
  return s + "</svg>\n";
}

}  // namespace depthkit
