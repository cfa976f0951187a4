#include <cmath>

#include "depthkit/grid.hpp"
#include "util.hpp"

using namespace depthkit;

TEST_SUITE("grid") {

TEST_CASE("gradient of a constant map is zero") {
  const auto g = gradient(DepthMap(6, 5, 0.5));
  for (double v : g.dx.data()) CHECK(v == 0.0);
  for (double v : g.dy.data()) CHECK(v == 0.0);
}

TEST_CASE("gradient of a column ramp") {
  DepthMap d(7, 4);
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 7; ++j) d(i, j) = 0.01 * j;
  const auto g = gradient(d);
  for (int i = 0; i < 4; ++i) {
    for (int j = 0; j < 6; ++j) CHECK(g.dx(i, j) == doctest::Approx(0.01).epsilon(1e-12));
    CHECK(g.dx(i, 6) == 0.0);
    for (int j = 0; j < 7; ++j) CHECK(g.dy(i, j) == 0.0);
  }
}

TEST_CASE("gradient matches a double-loop reference") {
  Rng rng(3);
  const auto d = testutil::random_depth(8, 8, rng);
  const auto g = gradient(d);
  for (int i = 0; i < 8; ++i) {
    for (int j = 0; j < 8; ++j) {
      CHECK(g.dx(i, j) == (j + 1 < 8 ? d(i, j + 1) - d(i, j) : 0.0));
      CHECK(g.dy(i, j) == (i + 1 < 8 ? d(i + 1, j) - d(i, j) : 0.0));
    }
  }
}

TEST_CASE("laplacian energy vanishes on an affine map") {
  DepthMap d(9, 7);
  for (int i = 0; i < 7; ++i)
    for (int j = 0; j < 9; ++j) d(i, j) = 0.3 + 0.02 * i - 0.01 * j;
  const ScalarGrid lap = laplacian_energy(d);
  for (double v : lap.data()) CHECK(std::abs(v) < 1e-24);
}

TEST_CASE("laplacian energy of a unit spike") {
  DepthMap d(5, 5, 0.0);
  d(2, 2) = 1.0;
  const auto e = laplacian_energy(d);
  CHECK(e(2, 2) == 8.0);
  CHECK(e(2, 1) == 1.0);  // (1)^2 along the row, 0 along the column
  CHECK(e(0, 2) == 0.0);
}

TEST_CASE("laplacian energy matches a stencil-loop reference") {
  Rng rng(5);
  const auto d = testutil::random_depth(8, 8, rng);
  const auto e = laplacian_energy(d);
  for (int i = 0; i < 8; ++i) {
    for (int j = 0; j < 8; ++j) {
      double want = 0.0;
      if (i > 0 && i < 7 && j > 0 && j < 7) {
        const double xx = d(i, j + 1) - 2 * d(i, j) + d(i, j - 1);
        const double yy = d(i + 1, j) - 2 * d(i, j) + d(i - 1, j);
        want = xx * xx + yy * yy;
      }
      CHECK(e(i, j) == doctest::Approx(want).epsilon(1e-12));
    }
  }
}

TEST_CASE("interpolate_fill is the identity on dense input") {
  Rng rng(1);
  const auto d = testutil::random_depth(6, 4, rng);
  CHECK(interpolate_fill(d, ValidityMask::all_valid(6, 4)) == d);
}

TEST_CASE("interpolate_fill fills a hole in a constant map") {
  DepthMap d(9, 9, 0.5);
  ValidityMask m = ValidityMask::all_valid(9, 9);
  for (int i = 3; i < 6; ++i)
    for (int j = 3; j < 6; ++j) d(i, j) = 0.0, m(i, j) = 0;
  const auto f = interpolate_fill(d, m);
  for (double v : f.data()) CHECK(std::abs(v - 0.5) <= 1e-6);
}

TEST_CASE("interpolate_fill matches the 1-D Laplace solution on a strip") {
  // Valid only at both ends; zero-flux top/bottom makes every row 1-D.
  const int w = 7, h = 3;
  DepthMap d(w, h);
  ValidityMask m(w, h);
  for (int i = 0; i < h; ++i) {
    d(i, 0) = 0.4, m(i, 0) = 1;
    d(i, w - 1) = 0.6, m(i, w - 1) = 1;
  }
  const auto f = interpolate_fill(d, m);
  // Tridiagonal solve of x[k-1] - 2x[k] + x[k+1] = 0 by Thomas elimination.
  const int n = w - 2;
  std::vector<double> c(n), r(n), x(n);
  for (int k = 0; k < n; ++k) {
    double rhs = 0.0;
    if (k == 0) rhs -= 0.4;
    if (k == n - 1) rhs -= 0.6;
    const double denom = -2.0 - (k > 0 ? c[k - 1] : 0.0);
    c[k] = 1.0 / denom;
    r[k] = (rhs - (k > 0 ? r[k - 1] : 0.0)) / denom;
  }
  x[n - 1] = r[n - 1];
  for (int k = n - 2; k >= 0; --k) x[k] = r[k] - c[k] * x[k + 1];
  for (int i = 0; i < h; ++i)
    for (int k = 0; k < n; ++k) CHECK(std::abs(f(i, k + 1) - x[k]) <= 1e-4);
}

TEST_CASE("interpolate_fill respects the min/max principle and is idempotent") {
  Rng rng(11);
  const auto d = testutil::random_depth(12, 10, rng, 0.7, 1.2);
  const auto m = testutil::random_mask(12, 10, rng, 0.4);
  double lo = 1e9, hi = -1e9;
  for (std::size_t i = 0; i < d.size(); ++i)
    if (m.valid(i)) lo = std::min(lo, d[i]), hi = std::max(hi, d[i]);
  const auto f = interpolate_fill(d, m);
  for (std::size_t i = 0; i < f.size(); ++i) {
    CHECK(f[i] > 0.0);
    if (m.valid(i)) CHECK(f[i] == d[i]);
    CHECK(f[i] >= lo - 1e-12);
    CHECK(f[i] <= hi + 1e-12);
  }
  CHECK(interpolate_fill(f, ValidityMask::all_valid(12, 10)) == f);
}

TEST_CASE("interpolate_fill rejects an all-invalid mask") {
  CHECK_THROWS_CODE(interpolate_fill(DepthMap(4, 4), ValidityMask(4, 4)), ErrorCode::AllInvalid);
}

TEST_CASE("downsample_masked averages valid pixels per block") {
  DepthMap d(2, 2);
  ValidityMask m(2, 2);
  d(0, 0) = 0.4, m(0, 0) = 1;
  d(0, 1) = 0.6, m(0, 1) = 1;
  auto [o, om] = downsample_masked(d, m, 2);
  CHECK(o(0, 0) == doctest::Approx(0.5));
  CHECK(om.valid(0, 0));

  auto [z, zm] = downsample_masked(DepthMap(2, 2, 0.7), ValidityMask(2, 2), 2);
  CHECK(!zm.valid(0, 0));
  CHECK(z(0, 0) == 0.0);
}

TEST_CASE("downsample_masked matches a block-loop reference") {
  Rng rng(9);
  const auto d = testutil::random_depth(16, 16, rng);
  const auto m = testutil::random_mask(16, 16, rng, 0.3);
  auto [o, om] = downsample_masked(d, m, 4);
  REQUIRE(o.width() == 4);
  for (int bi = 0; bi < 4; ++bi) {
    for (int bj = 0; bj < 4; ++bj) {
      double s = 0;
      int n = 0;
      for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j)
          if (m.valid(4 * bi + i, 4 * bj + j)) s += d(4 * bi + i, 4 * bj + j), ++n;
      CHECK(om.valid(bi, bj) == (n > 0));
      if (n > 0) CHECK(o(bi, bj) == doctest::Approx(s / n).epsilon(1e-12));
    }
  }
}

TEST_CASE("downsample_masked with an all-valid mask is a plain block mean") {
  Rng rng(2);
  const auto d = testutil::random_depth(8, 4, rng);
  auto [o, om] = downsample_masked(d, ValidityMask::all_valid(8, 4), 2);
  CHECK(om.count_valid() == 8);
  CHECK(o(1, 2) == doctest::Approx((d(2, 4) + d(2, 5) + d(3, 4) + d(3, 5)) / 4).epsilon(1e-12));
}

TEST_CASE("downsample_masked rejects bad factors") {
  CHECK_THROWS_CODE(downsample_masked(DepthMap(6, 4), ValidityMask(6, 4), 4), ErrorCode::BadFactor);
  CHECK_THROWS_CODE(downsample_masked(DepthMap(6, 6), ValidityMask(6, 6), 3), ErrorCode::BadFactor);
}

TEST_CASE("depth map invariants are enforced") {
  DepthMap d(2, 2, 1.0);
  d(0, 1) = -0.1;
  CHECK_THROWS(d.validate());
  RgbImage rgb(2, 2, {0.5, 1.5, 0.0});
  CHECK_THROWS(rgb.validate());
}

}
