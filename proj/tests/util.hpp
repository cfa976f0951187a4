#pragma once

#include <doctest.h>

#include <filesystem>
#include <string>

#include "depthkit/errors.hpp"
#include "depthkit/grid.hpp"
#include "depthkit/rng.hpp"

#define CHECK_THROWS_CODE(expr, expected)                      \
  do {                                                         \
    bool thrown_ = false;                                      \
    try {                                                      \
      (void)(expr);                                            \
    } catch (const depthkit::Error& e_) {                      \
      thrown_ = true;                                          \
      CHECK_MESSAGE(e_.code() == (expected), e_.what());       \
    }                                                          \
    CHECK_MESSAGE(thrown_, "expected " #expected);             \
  } while (0)

namespace testutil {

inline depthkit::DepthMap random_depth(int w, int h, depthkit::Rng& rng, double lo = 0.5, double hi = 1.5) {
  depthkit::DepthMap d(w, h);
  for (auto& v : d.data()) v = rng.uniform(lo, hi);
  return d;
}

inline depthkit::ValidityMask random_mask(int w, int h, depthkit::Rng& rng, double p_valid = 0.7) {
  depthkit::ValidityMask m(w, h);
  for (auto& v : m.data()) v = rng.uniform() < p_valid ? 1 : 0;
  return m;
}

// Fresh empty directory under the working directory.
inline std::filesystem::path scratch(const std::string& name) {
  auto p = std::filesystem::current_path() / "scratch" / name;
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace testutil
