#pragma once

#include <string>
#include <vector>

namespace depthkit {

struct Series {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
};

// Hand-emitted SVG documents: axes, ticks, polylines and a legend. No
// timestamps, so identical inputs give identical bytes.
std::string svg_line_chart(const std::string& title, const std::string& x_label, const std::string& y_label,
                           const std::vector<Series>& series);

std::string svg_bar_chart(const std::string& title, const std::string& y_label, const std::vector<std::string>& labels,
                          const std::vector<double>& values);

}  // namespace depthkit
