#include "hilab/toy_env.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <vector>

namespace hilab {

void RingWorldConfig::check() const {
  if (ring_size < 1) throw std::invalid_argument("env.ring_size must be >= 1");
  if (goal >= ring_size) throw std::invalid_argument("env.goal must be < env.ring_size");
  if (!(slip_prob >= 0.0 && slip_prob <= 1.0)) throw std::invalid_argument("env.slip_prob must lie in [0,1]");
  if (!(obs_noise >= 0.0)) throw std::invalid_argument("env.obs_noise must be >= 0");
  if (max_steps < 1) throw std::invalid_argument("env.max_steps must be >= 1");
}

RingWorld::RingWorld(RingWorldConfig config) : config_(config), rng_(config.seed) { config_.check(); }

Observation RingWorld::clean_observation(std::size_t position) const noexcept {
  const double angle = 2.0 * std::numbers::pi * static_cast<double>(position) /
                       static_cast<double>(config_.ring_size);
  return {std::cos(angle), std::sin(angle)};
}

Observation RingWorld::observe() {
  Observation obs = clean_observation(state_.position);
  if (config_.obs_noise > 0.0) {
    for (double& v : obs) v = std::clamp(v + rng_.uniform(-config_.obs_noise, config_.obs_noise), -1.0, 1.0);
  }
  return obs;
}

Observation RingWorld::reset(std::uint64_t seed) {
  rng_ = Rng(seed);
  return reset();
}

Observation RingWorld::reset() {
  state_ = EnvState{};
  return observe();
}

StepResult RingWorld::step(std::size_t action) {
  if (action >= kNumActions) throw std::invalid_argument("RingWorld::step: invalid action");
  if (config_.slip_prob > 0.0 && rng_.bernoulli(config_.slip_prob)) {
    action = static_cast<std::size_t>(rng_.below(kNumActions));
  }
  const std::size_t m = config_.ring_size;
  if (action == 1) state_.position = (state_.position + 1) % m;
  if (action == 2) state_.position = (state_.position + m - 1) % m;
  ++state_.steps_taken;

  StepResult result;
  result.obs = observe();
  result.terminated = state_.position == config_.goal;
  result.reward = result.terminated ? 1.0 : 0.0;
  result.truncated = !result.terminated && state_.steps_taken >= config_.max_steps;
  return result;
}

double optimal_return_brute_force(const RingWorldConfig& config, double gamma, std::size_t max_len) {
  config.check();
  // Frontier of reachable positions after each step; an action sequence's
  // return is gamma^(k-1) when it first hits the goal at step k.
  if (config.goal == 0) return 0.0;  // start cell is the goal; no reward is paid on reset
  std::vector<bool> frontier(config.ring_size, false);
  frontier[0] = true;
  double discount = 1.0;
  for (std::size_t k = 1; k <= max_len; ++k) {
    std::vector<bool> next(config.ring_size, false);
    for (std::size_t p = 0; p < config.ring_size; ++p) {
      if (!frontier[p]) continue;
      for (std::size_t a = 0; a < kNumActions; ++a) {
        std::size_t q = p;
        if (a == 1) q = (p + 1) % config.ring_size;
        if (a == 2) q = (p + config.ring_size - 1) % config.ring_size;
        next[q] = true;
      }
    }
    if (next[config.goal]) return discount;
    frontier = std::move(next);
    discount *= gamma;
  }
  return 0.0;
}

}  // namespace hilab
