#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

#include "texsyn/error.hpp"
#include "texsyn/tensor.hpp"

namespace texsyn {

/// xoshiro256** seeded through SplitMix64. Gaussian samples come from the
/// Box-Muller transform, both outputs of each pair used in order. The stream
/// depends only on the seed; the standard library distributions are avoided
/// because their algorithms differ between implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) {
    std::uint64_t s = seed;
    for (auto& word : state_) word = splitmix64(s);
  }

  std::uint64_t next_u64() {
    const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
  }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double gaussian() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    spare_ = radius * std::sin(angle);
    has_spare_ = true;
    return radius * std::cos(angle);
  }

 private:
  static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

  static std::uint64_t splitmix64(std::uint64_t& s) {
    std::uint64_t z = (s += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  std::uint64_t state_[4]{};
  double spare_ = 0.0;
  bool has_spare_ = false;
};

template <typename T>
Tensor<T> fill_noise(const Shape& shape, Rng& rng, double mean, double stddev) {
  if (!(stddev >= 0.0)) throw ConfigError("fill_noise: std must be >= 0");
  Tensor<T> out(shape);
  for (auto& v : out.data()) v = static_cast<T>(mean + stddev * rng.gaussian());
  return out;
}

}  // namespace texsyn
