#pragma once

// Pixel grids and the image-calculus primitives shared by the losses, the
// sparsifiers and residual-input preparation. Grids are row-major and indexed
// (row, col). A depth of 0.0 marks a missing measurement, but consumers are
// expected to consult a ValidityMask rather than the sentinel.

#include <array>
#include <cstdint>
#include <utility>
#include <vector>

namespace depthkit {

template <class T>
class Grid {
 public:
  Grid() = default;
  Grid(int width, int height, T fill = T{});
  Grid(int width, int height, std::vector<T> data);

  int width() const { return width_; }
  int height() const { return height_; }
  std::size_t size() const { return data_.size(); }
  bool same_shape(int w, int h) const { return w == width_ && h == height_; }
  template <class U>
  bool same_shape(const Grid<U>& o) const { return same_shape(o.width(), o.height()); }

  T& operator()(int row, int col) { return data_[index(row, col)]; }
  const T& operator()(int row, int col) const { return data_[index(row, col)]; }
  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  const std::vector<T>& data() const { return data_; }
  std::vector<T>& data() { return data_; }

  friend bool operator==(const Grid& a, const Grid& b) {
    return a.width_ == b.width_ && a.height_ == b.height_ && a.data_ == b.data_;
  }

 private:
  std::size_t index(int row, int col) const {
    return static_cast<std::size_t>(row) * static_cast<std::size_t>(width_) +
           static_cast<std::size_t>(col);
  }

  int width_ = 0;
  int height_ = 0;
  std::vector<T> data_;
};

using ScalarGrid = Grid<double>;
using Rgb = std::array<double, 3>;

/// Depth in meters; 0.0 = invalid. Values must be finite and non-negative.
class DepthMap : public Grid<double> {
 public:
  DepthMap() = default;
  DepthMap(int width, int height, double fill = 0.0);
  DepthMap(int width, int height, std::vector<double> data);

  // Throws DimensionMismatch / NonFinite when an invariant is broken.
  void validate() const;
  std::size_t count_valid() const;
};

/// Per-pixel valid flag, paired with a DepthMap of equal dimensions.
class ValidityMask : public Grid<std::uint8_t> {
 public:
  ValidityMask() = default;
  ValidityMask(int width, int height, bool fill = false);

  bool valid(int row, int col) const { return (*this)(row, col) != 0; }
  bool valid(std::size_t i) const { return (*this)[i] != 0; }
  std::size_t count_valid() const;

  // valid <=> depth > 0
  static ValidityMask from_depth(const DepthMap& d);
  static ValidityMask all_valid(int width, int height) { return {width, height, true}; }
};

/// RGB triples in [0, 1].
class RgbImage : public Grid<Rgb> {
 public:
  RgbImage() = default;
  RgbImage(int width, int height, Rgb fill = {0.0, 0.0, 0.0});
  void validate() const;
};

struct GradientField {
  ScalarGrid dx;
  ScalarGrid dy;
};

// Forward differences; the last column of dx and the last row of dy are 0.
GradientField gradient(const ScalarGrid& d);

// (d_xx)^2 + (d_yy)^2 with 1-D second differences; 0 on the 1-pixel border.
ScalarGrid laplacian_energy(const ScalarGrid& d);

struct FillOptions {
  double tolerance = 1e-5;  // stop when the largest update falls below this (m)
  int max_iterations = 10000;
};

// Harmonic fill of invalid pixels by Jacobi diffusion. Valid pixels are
// Dirichlet boundary values; the image border is a zero-flux boundary.
DepthMap interpolate_fill(const DepthMap& d, const ValidityMask& m, const FillOptions& opts = {});

// Mean of valid pixels per factor x factor block. factor must be a power of
// two dividing both dimensions.
std::pair<DepthMap, ValidityMask> downsample_masked(const DepthMap& d, const ValidityMask& m, int factor);

// 0.299 R + 0.587 G + 0.114 B
ScalarGrid luminance(const RgbImage& rgb);

}  // namespace depthkit
