#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <random>
#include <vector>

#include "spluad/core/tensor.hpp"

namespace spluad {

// Seeded generator. The engine is std::mt19937_64, whose output sequence is
// fixed by the standard; the distributions below are implemented here rather
// than taken from <random> because those are implementation-defined.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : seed_(seed), engine_(seed) {}

  std::uint64_t seed() const noexcept { return seed_; }

  std::uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n).
  std::size_t index(std::size_t n) {
    require(n > 0, ErrorCode::parameter, "Rng::index requires n > 0");
    // Rejection keeps the draw unbiased.
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t v;
    do {
      v = engine_();
    } while (v >= limit);
    return static_cast<std::size_t>(v % n);
  }

  bool bernoulli(double p) { return uniform() < p; }

  // Box-Muller; no cached second value so the stream position is simple.
  double normal(double mean = 0.0, double stddev = 1.0) {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return mean + stddev * std::sqrt(-2.0 * std::log(u1)) *
                      std::cos(2.0 * std::numbers::pi * u2);
  }

  // Normal truncated to [-2 stddev, 2 stddev] by rejection.
  double truncated_normal(double stddev) {
    for (;;) {
      const double z = normal();
      if (std::abs(z) <= 2.0) return z * stddev;
    }
  }

  template <typename T>
  void shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) std::swap(items[i - 1], items[index(i)]);
  }

  // Independent child stream; used to give subsystems their own sequences.
  Rng fork() { return Rng(engine_() ^ 0x9e3779b97f4a7c15ULL); }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
};

inline Tensor truncated_normal_tensor(Shape shape, double stddev, Rng& rng) {
  Tensor t(std::move(shape));
  for (double& v : t.values()) v = rng.truncated_normal(stddev);
  return t;
}

}  // namespace spluad
