#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace riverfuse {

/// Deterministic random source for all synthetic data.
///
/// std::mt19937_64 provides the bit stream; the uniform and normal
/// transforms are spelled out here instead of using std::*_distribution
/// because the standard leaves distribution algorithms unspecified and the
/// reproducibility guarantee is "same seed, same bytes" across toolchains.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  std::uint64_t bits() { return gen_(); }

  /// Uniform on [0, 1) with 53-bit resolution.
  double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer on [lo, hi], inclusive. Uses rejection to avoid
  /// modulo bias.
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
    const std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
    if (span == 0) return static_cast<std::int64_t>(gen_());  // full range
    const std::uint64_t limit = std::uint64_t(-1) - std::uint64_t(-1) % span;
    std::uint64_t draw;
    do {
      draw = gen_();
    } while (draw >= limit);
    return lo + static_cast<std::int64_t>(draw % span);
  }

  /// Standard normal via Box-Muller; pairs are cached.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * 3.14159265358979323846 * u2;
    spare_ = radius * std::sin(angle);
    has_spare_ = true;
    return radius * std::cos(angle);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  bool bernoulli(double p) { return uniform() < p; }

 private:
  std::mt19937_64 gen_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace riverfuse
