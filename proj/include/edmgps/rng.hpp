#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

namespace edmgps {

/// Portable random stream: std::mt19937_64 (bit-exact across standard
/// libraries) seeded through SplitMix64, with uniform and normal variates
/// derived here rather than by the implementation-defined std distributions.
///
///   uniform()  = (next() >> 11) * 2^-53
///   normal()   = Box-Muller, cosine branch, one pair per call
///   stream(i)  = Rng(splitmix64(seed + i * 0x9E3779B97F4A7C15))
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed), engine_(splitmix64(seed)) {}

  static std::uint64_t splitmix64(std::uint64_t z) {
    z += 0x9E3779B97F4A7C15ull;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  /// Independent child stream, e.g. one per batch instance.
  Rng stream(std::uint64_t index) const { return Rng(splitmix64(seed_ + index * 0x9E3779B97F4A7C15ull)); }

  std::uint64_t next() { return engine_(); }

  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  double normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  double normal(double mean, double sigma) { return mean + sigma * normal(); }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
};

}  // namespace edmgps
