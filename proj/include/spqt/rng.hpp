#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace spqt {

inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

/// Seeded random stream: mt19937_64 engine with hand-rolled uniform and
/// Box-Muller normal transforms, so the produced sequence depends only on
/// the seed, not on the standard library's distribution implementations.
class RandomStream {
 public:
  explicit RandomStream(std::uint64_t seed) : engine_(seed) {}

  /// Stream for trajectory `index` under `base_seed`. Streams are decorrelated
  /// through splitmix64 so growing the batch never reshuffles earlier ones.
  static RandomStream for_trajectory(std::uint64_t base_seed, std::uint64_t index) {
    std::uint64_t s = base_seed;
    splitmix64(s);
    s += index;
    std::uint64_t mixed = splitmix64(s);
    return RandomStream(mixed);
  }

  std::uint64_t bits() { return engine_(); }

  /// Uniform on [0, 1) with 53-bit resolution.
  double uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  /// Standard normal deviate.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = 0.0;
    do {
      u1 = uniform();
    } while (u1 <= 0.0);
    const double u2 = uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * M_PI * u2;
    spare_ = radius * std::sin(angle);
    has_spare_ = true;
    return radius * std::cos(angle);
  }

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace spqt
