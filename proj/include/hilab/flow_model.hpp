#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "hilab/nn.hpp"
#include "hilab/rng.hpp"
#include "hilab/trajectory.hpp"

namespace hilab {

/// Rectified-flow velocity network. Frame t's velocity is a function of the
/// causal window (z_j, a_{j-1}, tau_j) for j in [t-W+1, t].
class Denoiser {
 public:
  Denoiser() = default;
  Denoiser(NetDims dims, Rng& rng);
  Denoiser(NetDims dims, Mlp net);

  [[nodiscard]] const NetDims& dims() const noexcept { return dims_; }
  Mlp& net() noexcept { return net_; }
  [[nodiscard]] const Mlp& net() const noexcept { return net_; }

  /// One batched pass; row r is the velocity of refs[r].
  [[nodiscard]] Matrix velocities(std::span<const FrameRef> refs) const;

 private:
  NetDims dims_;
  Mlp net_;
};

/// Reward (symlog space) and termination logit per frame, on clean latents.
class RewardTermModel {
 public:
  RewardTermModel() = default;
  RewardTermModel(NetDims dims, Rng& rng);
  RewardTermModel(NetDims dims, Mlp net);

  [[nodiscard]] const NetDims& dims() const noexcept { return dims_; }
  Mlp& net() noexcept { return net_; }
  [[nodiscard]] const Mlp& net() const noexcept { return net_; }

  /// Column 0: reward in symlog space; column 1: termination logit.
  [[nodiscard]] Matrix predict(std::span<const FrameRef> refs) const;

 private:
  NetDims dims_;
  Mlp net_;
};

/// Denoising times for one training segment. With probability 0.2 the first
/// `prefix` frames (prefix ~ U{1..floor(0.7 H)}) are set clean.
struct SampledTimes {
  std::vector<double> taus;
  std::size_t prefix = 0;  ///< 0 when the prefix branch was not taken
};

inline constexpr double kCleanPrefixProb = 0.2;
inline constexpr double kCleanPrefixFraction = 0.7;

SampledTimes sample_times_with_prefix(std::size_t horizon, Rng& rng);

/// Clean segments plus their noise endpoints and denoising times.
struct TrainBatch {
  std::vector<LatentTrajectory> clean;
  std::vector<std::vector<double>> noise;  ///< frames x dim, U([-1,1])
  std::vector<std::vector<double>> times;  ///< frames

  /// Samples noise and times for each clean segment.
  static TrainBatch from_segments(std::vector<LatentTrajectory> clean, Rng& rng);
};

/// tau * z1 + (1 - tau) * z0 per frame.
LatentTrajectory noisy_mixture(const LatentTrajectory& clean, std::span<const double> noise,
                               std::span<const double> times);

struct LossAndGrad {
  double loss = 0.0;
  ParamSet grads;
};

/// Mean over unmasked frames of ||v(window) - (z1 - z0)||^2, with parameter
/// gradients. All frames of all segments go through one forward pass.
LossAndGrad rf_loss(const Denoiser& model, const TrainBatch& batch);

/// Mean over unmasked frames of (r_pred - symlog r)^2 + BCE(term logit, d).
LossAndGrad reward_term_loss(const RewardTermModel& model, std::span<const LatentTrajectory> clean);

/// z += v * dtau for every frame with dtau > 0. `z` and `v` are frames x dim.
void euler_step(std::span<double> z, std::span<const double> v, std::span<const double> dtau,
                std::size_t dim);

/// Computes the loss gradient and applies one AdamW update. Throws
/// std::runtime_error on a non-finite loss or gradient.
double train_step(Denoiser& model, AdamW& optimizer, const TrainBatch& batch);
double train_step(RewardTermModel& model, AdamW& optimizer, std::span<const LatentTrajectory> clean);

}  // namespace hilab
