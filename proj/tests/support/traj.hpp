#pragma once

#include "hilab/rng.hpp"
#include "hilab/trajectory.hpp"

namespace hilab::testing {

/// Clean trajectory with latents in [-1,1], random actions and sparse
/// rewards/terminations.
inline LatentTrajectory random_trajectory(std::size_t frames, std::size_t dim, std::size_t actions, Rng& rng) {
  auto t = LatentTrajectory::zeros(frames, dim);
  for (double& v : t.latents) v = rng.uniform(-1.0, 1.0);
  for (int& a : t.actions) a = static_cast<int>(rng.below(actions));
  for (std::size_t j = 1; j < frames; ++j) {
    t.rewards[j] = rng.bernoulli(0.3) ? rng.uniform(-2.0, 2.0) : 0.0;
    t.terms[j] = rng.bernoulli(0.2);
  }
  return t;
}

}  // namespace hilab::testing
