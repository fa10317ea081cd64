#pragma once

#include <array>
#include <cstddef>
#include <cstdint>

#include "hilab/rng.hpp"

namespace hilab {

/// Latent / observation dimension of the ring world.
inline constexpr std::size_t kObsDim = 2;
/// Actions: 0 = stay, 1 = +1, 2 = -1.
inline constexpr std::size_t kNumActions = 3;

using Observation = std::array<double, kObsDim>;

struct RingWorldConfig {
  std::size_t ring_size = 16;
  std::size_t goal = 8;
  double slip_prob = 0.0;
  double obs_noise = 0.02;
  std::size_t max_steps = 100;
  std::uint64_t seed = 0;

  void check() const;
};

struct EnvState {
  std::size_t position = 0;
  std::size_t steps_taken = 0;
};

struct StepResult {
  Observation obs{};
  double reward = 0.0;
  bool terminated = false;
  bool truncated = false;
};

/// Agent on a ring of M cells observing (cos, sin) of its angle plus
/// bounded uniform noise. Reaching the goal cell pays 1 and terminates.
class RingWorld {
 public:
  explicit RingWorld(RingWorldConfig config);

  /// Position back to 0; the env noise stream is re-seeded from `seed`.
  Observation reset(std::uint64_t seed);
  /// Reset continuing the current noise stream (used between episodes).
  Observation reset();
  StepResult step(std::size_t action);

  [[nodiscard]] const EnvState& state() const noexcept { return state_; }
  [[nodiscard]] const RingWorldConfig& config() const noexcept { return config_; }

  /// Noise-free observation of a cell.
  [[nodiscard]] Observation clean_observation(std::size_t position) const noexcept;

 private:
  Observation observe();

  RingWorldConfig config_;
  EnvState state_;
  Rng rng_;
};

/// Identity tokenizer: observations already live in [-1,1]^2.
inline Observation encode(const Observation& obs) noexcept { return obs; }
inline Observation decode(const Observation& z) noexcept { return z; }

/// Discounted return of the best action sequence from reset, found by
/// breadth-first enumeration of action sequences up to `max_len` steps.
/// Deterministic dynamics only (slip 0).
double optimal_return_brute_force(const RingWorldConfig& config, double gamma, std::size_t max_len);

}  // namespace hilab
