#pragma once

#include <cstddef>
#include <string>

#include "depthkit/grid.hpp"

namespace depthkit {

// Errors over valid (non-zero) ground-truth pixels.
struct MetricsReport {
  double rmse = 0.0;  // m
  double mae = 0.0;   // m
  double rel = 0.0;
  std::size_t n_valid = 0;
};

// Pools squared, absolute and relative errors across many image pairs.
class MetricsAccumulator {
 public:
  void add(const DepthMap& gt, const DepthMap& pred);
  void add_pixel(double gt, double pred);
  std::size_t count() const { return n_; }
  MetricsReport report() const;

 private:
  double sum_sq_ = 0.0;
  double sum_abs_ = 0.0;
  double sum_rel_ = 0.0;
  std::size_t n_ = 0;
};

MetricsReport evaluate(const DepthMap& gt, const DepthMap& pred);

std::string metrics_csv_header();
// experiment,split,rmse_m,mae_m,rel,n_valid with 6 decimals
std::string metrics_csv_row(const std::string& experiment, const std::string& split, const MetricsReport& r);

}  // namespace depthkit
