#include "depthkit/grid.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "depthkit/errors.hpp"

namespace depthkit {

template <class T>
Grid<T>::Grid(int width, int height, T fill) : width_(width), height_(height) {
  if (width < 0 || height < 0) fail(ErrorCode::DimensionMismatch, "negative grid dimensions");
  data_.assign(static_cast<std::size_t>(width) * static_cast<std::size_t>(height), fill);
}

template <class T>
Grid<T>::Grid(int width, int height, std::vector<T> data)
    : width_(width), height_(height), data_(std::move(data)) {
  if (width < 0 || height < 0 ||
      data_.size() != static_cast<std::size_t>(width) * static_cast<std::size_t>(height)) {
    fail(ErrorCode::DimensionMismatch, "grid data length does not match " + std::to_string(width) +
                                           "x" + std::to_string(height));
  }
}

template class Grid<double>;
template class Grid<std::uint8_t>;
template class Grid<Rgb>;

DepthMap::DepthMap(int width, int height, double fill) : Grid<double>(width, height, fill) {}

DepthMap::DepthMap(int width, int height, std::vector<double> data)
    : Grid<double>(width, height, std::move(data)) {}

void DepthMap::validate() const {
  for (double v : data()) {
    if (!std::isfinite(v) || v < 0.0) fail(ErrorCode::NonFinite, "depth value not finite or negative");
  }
}

std::size_t DepthMap::count_valid() const {
  return static_cast<std::size_t>(std::count_if(data().begin(), data().end(), [](double v) { return v > 0.0; }));
}

ValidityMask::ValidityMask(int width, int height, bool fill)
    : Grid<std::uint8_t>(width, height, fill ? 1 : 0) {}

std::size_t ValidityMask::count_valid() const {
  return static_cast<std::size_t>(std::count_if(data().begin(), data().end(), [](std::uint8_t v) { return v != 0; }));
}

ValidityMask ValidityMask::from_depth(const DepthMap& d) {
  ValidityMask m(d.width(), d.height());
  for (std::size_t i = 0; i < d.size(); ++i) m[i] = d[i] > 0.0 ? 1 : 0;
  return m;
}

RgbImage::RgbImage(int width, int height, Rgb fill) : Grid<Rgb>(width, height, fill) {}

void RgbImage::validate() const {
  for (const Rgb& p : data()) {
    for (double c : p) {
      if (!(c >= 0.0 && c <= 1.0)) fail(ErrorCode::NonFinite, "rgb channel outside [0,1]");
    }
  }
}

GradientField gradient(const ScalarGrid& d) {
  const int w = d.width(), h = d.height();
  GradientField g{ScalarGrid(w, h, 0.0), ScalarGrid(w, h, 0.0)};
  for (int i = 0; i < h; ++i) {
    for (int j = 0; j < w; ++j) {
      if (j + 1 < w) g.dx(i, j) = d(i, j + 1) - d(i, j);
      if (i + 1 < h) g.dy(i, j) = d(i + 1, j) - d(i, j);
    }
  }
  return g;
}

ScalarGrid laplacian_energy(const ScalarGrid& d) {
  const int w = d.width(), h = d.height();
  ScalarGrid out(w, h, 0.0);
  for (int i = 1; i + 1 < h; ++i) {
    for (int j = 1; j + 1 < w; ++j) {
      const double dxx = d(i, j + 1) - 2.0 * d(i, j) + d(i, j - 1);
      const double dyy = d(i + 1, j) - 2.0 * d(i, j) + d(i - 1, j);
      out(i, j) = dxx * dxx + dyy * dyy;
    }
  }
  return out;
}

DepthMap interpolate_fill(const DepthMap& d, const ValidityMask& m, const FillOptions& opts) {
  if (!d.same_shape(m)) fail(ErrorCode::DimensionMismatch, "depth and mask differ in size");
  const int w = d.width(), h = d.height();

  double sum = 0.0;
  std::size_t n_valid = 0;
  std::vector<int> holes;
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (m.valid(i)) {
      sum += d[i];
      ++n_valid;
    } else {
      holes.push_back(static_cast<int>(i));
    }
  }
  if (n_valid == 0) fail(ErrorCode::AllInvalid, "interpolate_fill needs at least one valid pixel");

  DepthMap cur = d;
  const double mean = sum / static_cast<double>(n_valid);
  for (int idx : holes) cur[idx] = mean;
  if (holes.empty()) return cur;

  std::vector<double> next(holes.size());
  for (int it = 0; it < opts.max_iterations; ++it) {
    double max_update = 0.0;
    for (std::size_t k = 0; k < holes.size(); ++k) {
      const int row = holes[k] / w, col = holes[k] % w;
      double acc = 0.0;
      int n = 0;
      if (col > 0) { acc += cur(row, col - 1); ++n; }
      if (col + 1 < w) { acc += cur(row, col + 1); ++n; }
      if (row > 0) { acc += cur(row - 1, col); ++n; }
      if (row + 1 < h) { acc += cur(row + 1, col); ++n; }
      next[k] = n > 0 ? acc / n : cur[holes[k]];
      max_update = std::max(max_update, std::abs(next[k] - cur[holes[k]]));
    }
    for (std::size_t k = 0; k < holes.size(); ++k) cur[holes[k]] = next[k];
    if (max_update < opts.tolerance) break;
  }
  return cur;
}

std::pair<DepthMap, ValidityMask> downsample_masked(const DepthMap& d, const ValidityMask& m, int factor) {
  if (!d.same_shape(m)) fail(ErrorCode::DimensionMismatch, "depth and mask differ in size");
  if (factor < 1 || (factor & (factor - 1)) != 0) {
    fail(ErrorCode::BadFactor, "factor " + std::to_string(factor) + " is not a power of two");
  }
  if (d.width() % factor != 0 || d.height() % factor != 0) {
    fail(ErrorCode::BadFactor, "dimensions not divisible by " + std::to_string(factor));
  }
  const int ow = d.width() / factor, oh = d.height() / factor;
  DepthMap out(ow, oh, 0.0);
  ValidityMask out_mask(ow, oh, false);
  for (int oi = 0; oi < oh; ++oi) {
    for (int oj = 0; oj < ow; ++oj) {
      double acc = 0.0;
      int n = 0;
      for (int di = 0; di < factor; ++di) {
        for (int dj = 0; dj < factor; ++dj) {
          const int i = oi * factor + di, j = oj * factor + dj;
          if (m.valid(i, j)) {
            acc += d(i, j);
            ++n;
          }
        }
      }
      if (n > 0) {
        out(oi, oj) = acc / n;
        out_mask(oi, oj) = 1;
      }
    }
  }
  return {std::move(out), std::move(out_mask)};
}

ScalarGrid luminance(const RgbImage& rgb) {
  ScalarGrid out(rgb.width(), rgb.height(), 0.0);
  for (std::size_t i = 0; i < rgb.size(); ++i) {
    out[i] = 0.299 * rgb[i][0] + 0.587 * rgb[i][1] + 0.114 * rgb[i][2];
  }
  return out;
}

}  // namespace depthkit
