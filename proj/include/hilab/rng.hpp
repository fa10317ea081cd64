#pragma once

#include <array>
#include <cstdint>
#include <limits>

namespace hilab {

/// splitmix64 finalizer; used for seeding and stream derivation.
constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// Named stream tags. Every random draw in the project comes from a stream
/// derived from one root seed as `Rng(root).fork(tag).fork(index)...`.
enum class Stream : std::uint64_t {
  Env = 1,
  Collect = 2,
  WorldModel = 3,
  Imagination = 4,
  Eval = 5,
  Init = 6,
  Replay = 7,
  Study = 8,
  Naive = 9,
};

/// xoshiro256** with splitmix64 seeding.
///
/// Satisfies UniformRandomBitGenerator, so it can drive <random>
/// distributions. `fork` derives an independent child stream from the
/// current state and a stream id without advancing the parent.
class Rng {
 public:
  using result_type = std::uint64_t;

  explicit Rng(std::uint64_t seed = 0) noexcept {
    std::uint64_t x = seed;
    for (auto& s : state_) {
      x = splitmix64(x);
      s = x;
    }
  }

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

  result_type operator()() noexcept { return next(); }

  result_type next() noexcept {
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

  /// Uniform double in [0, 1) with 53 random bits. Never returns 1.
  double uniform() noexcept { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  /// Uniform double in [lo, hi).
  double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n). Lemire's method with rejection; n > 0.
  std::uint64_t below(std::uint64_t n) noexcept {
    __uint128_t m = static_cast<__uint128_t>(next()) * n;
    auto low = static_cast<std::uint64_t>(m);
    if (low < n) {
      const std::uint64_t threshold = (0 - n) % n;
      while (low < threshold) {
        m = static_cast<__uint128_t>(next()) * n;
        low = static_cast<std::uint64_t>(m);
      }
    }
    return static_cast<std::uint64_t>(m >> 64);
  }

  bool bernoulli(double p) noexcept { return uniform() < p; }

  [[nodiscard]] Rng fork(std::uint64_t stream_id) const noexcept {
    std::uint64_t h = splitmix64(stream_id ^ 0xD1B54A32D192ED03ULL);
    for (auto s : state_) h = splitmix64(h ^ s);
    return Rng(h);
  }

  [[nodiscard]] Rng fork(Stream tag) const noexcept { return fork(static_cast<std::uint64_t>(tag)); }

 private:
  static constexpr std::uint64_t rotl(std::uint64_t x, int k) noexcept {
    return (x << k) | (x >> (64 - k));
  }

  std::array<std::uint64_t, 4> state_{};
};

}  // namespace hilab
