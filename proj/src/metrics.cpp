#include "depthkit/metrics.hpp"

#include <cmath>
#include <cstdio>

#include "depthkit/errors.hpp"

namespace depthkit {

void MetricsAccumulator::add_pixel(double gt, double pred) {
  if (!(gt > 0.0)) return;
  const double e = gt - pred;
  sum_sq_ += e * e;
  sum_abs_ += std::abs(e);
  sum_rel_ += std::abs(e) / gt;
  ++n_;
}

void MetricsAccumulator::add(const DepthMap& gt, const DepthMap& pred) {
  if (!gt.same_shape(pred)) fail(ErrorCode::DimensionMismatch, "ground truth and prediction differ in size");
  for (std::size_t i = 0; i < gt.size(); ++i) add_pixel(gt[i], pred[i]);
}

MetricsReport MetricsAccumulator::report() const {
  if (n_ == 0) fail(ErrorCode::NoValidPixels, "no valid ground-truth pixels");
  const double n = static_cast<double>(n_);
  return {std::sqrt(sum_sq_ / n), sum_abs_ / n, sum_rel_ / n, n_};
}

MetricsReport evaluate(const DepthMap& gt, const DepthMap& pred) {
  MetricsAccumulator acc;
  acc.add(gt, pred);
  return acc.report();
}

std::string metrics_csv_header() { return "experiment,split,rmse_m,mae_m,rel,n_valid"; }

std::string metrics_csv_row(const std::string& experiment, const std::string& split, const MetricsReport& r) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "%.6f,%.6f,%.6f,%zu", r.rmse, r.mae, r.rel, r.n_valid);
  return experiment + "," + split + "," + buf;
}

}  // namespace depthkit
