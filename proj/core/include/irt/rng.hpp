// Seeded random draws built on mt19937_64 with explicit arithmetic, so
// streams are reproducible byte-for-byte independent of the standard
// library's distribution implementations.

#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace irt {

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  /// Uniform double in [0, 1).
  double uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Standard normal via Box-Muller (one value per call, cache discarded).
  double normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * 3.141592653589793238462643383279502884 * u2);
  }

  double normal(double mean, double sigma) { return mean + sigma * normal(); }

  /// Uniform integer in [0, n).
  std::uint64_t index(std::uint64_t n) { return engine_() % n; }

  /// Derives an independent child stream; used to give scenes/objects
  /// their own generators so draw order stays stable under config edits.
  Rng fork(std::uint64_t salt) {
    return Rng(engine_() ^ (0x9e3779b97f4a7c15ull * (salt + 1)));
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace irt
