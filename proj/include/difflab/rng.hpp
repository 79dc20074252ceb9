#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <string_view>

namespace difflab {

/// Deterministic splittable random stream (splitmix64 core).
///
/// Identical seeds plus identical draw order give identical results on any
/// platform with IEEE-754 doubles. split() is a pure function of the stream's
/// seed and the label, so child streams do not depend on how many draws the
/// parent has already made.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed) : seed_(seed), state_(seed) {}

  RngStream split(std::uint64_t label) const {
    return RngStream(mix(seed_ + 0x9E3779B97F4A7C15ULL * (label + 1)));
  }

  RngStream split(std::string_view label) const {
    std::uint64_t h = 0xCBF29CE484222325ULL;  // FNV-1a
    for (unsigned char c : label) {
      h ^= c;
      h *= 0x100000001B3ULL;
    }
    return split(h);
  }

  std::uint64_t next_u64() {
    state_ += 0x9E3779B97F4A7C15ULL;
    return mix(state_);
  }

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  /// Uniform integer in [0, n). Rejection sampling keeps it unbiased.
  std::uint64_t uniform_int(std::uint64_t n) {
    if (n == 0) throw std::invalid_argument("uniform_int: n must be positive");
    const std::uint64_t zone = n * (UINT64_MAX / n);
    std::uint64_t r;
    do {
      r = next_u64();
    } while (r >= zone);
    return r % n;
  }

  /// One draw from an unnormalized nonnegative weight vector (CDF walk).
  int categorical(const Eigen::Ref<const Eigen::ArrayXd>& weights) {
    if (weights.size() == 0) throw std::invalid_argument("categorical: empty weights");
    if ((weights < 0.0).any()) throw std::invalid_argument("categorical: negative weight");
    const double total = weights.sum();
    if (!(total > 0.0) || !std::isfinite(total))
      throw std::invalid_argument("categorical: weights must have positive finite sum");
    const double x = uniform() * total;
    double cum = 0.0;
    int last_positive = -1;
    for (Eigen::Index i = 0; i < weights.size(); ++i) {
      const double w = weights(i);
      if (w > 0.0) last_positive = static_cast<int>(i);
      cum += w;
      if (x < cum) return static_cast<int>(i);
    }
    return last_positive;  // guards against rounding in the final bin
  }

  std::uint64_t seed() const { return seed_; }

 private:
  static std::uint64_t mix(std::uint64_t z) {
    z ^= z >> 30;
    z *= 0xBF58476D1CE4E5B9ULL;
    z ^= z >> 27;
    z *= 0x94D049BB133111EBULL;
    z ^= z >> 31;
    return z;
  }

  std::uint64_t seed_;
  std::uint64_t state_;
};

}  // namespace difflab
