#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace depthkit {

// Portable random source. The engine is std::mt19937_64 (fully specified by
// the standard); the uniform and normal transforms are implemented here
// instead of std::*_distribution so outputs match across standard libraries.
class Rng {
 public:
  static constexpr std::string_view kAlgorithm =
      "mt19937_64; uniform=(x>>11)*2^-53; normal=Box-Muller(cos branch)";

  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }
  // [0, 1)
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // [0, n)
  std::uint64_t below(std::uint64_t n);
  double normal();

  template <class It>
  void shuffle(It first, It last) {
    // Fisher-Yates from the back; std::shuffle is not portable across libs.
    auto n = static_cast<std::uint64_t>(last - first);
    for (std::uint64_t i = n; i > 1; --i) {
      std::uint64_t j = below(i);
      std::iter_swap(first + (i - 1), first + j);
    }
  }

 private:
  std::mt19937_64 engine_;
};

// Stateless seed derivation (SplitMix64 finalizer) for per-item streams.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

}  // namespace depthkit
