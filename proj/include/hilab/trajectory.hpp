#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "hilab/nn.hpp"
#include "hilab/toy_env.hpp"

namespace hilab {

/// Marker for "no previous action" (first frame of a sequence, or padding).
inline constexpr int kNoAction = -1;

/// A sequence of latent frames with per-frame denoising times.
///
/// `actions[j]` is the action taken at frame j, leading to frame j+1, so a
/// trajectory with T frames has T-1 actions. `rewards[j]` / `terms[j]`
/// belong to the transition that arrives at frame j (zero for frame 0).
/// `mask[j] == 0` marks right-padding after an episode ended early.
struct LatentTrajectory {
  std::size_t dim = kObsDim;
  std::vector<double> latents;
  std::vector<int> actions;
  std::vector<double> taus;
  std::vector<double> rewards;
  std::vector<std::uint8_t> terms;
  std::vector<std::uint8_t> mask;

  /// T frames of zeros with tau = 1, no actions, mask = 1.
  static LatentTrajectory zeros(std::size_t frames, std::size_t dim = kObsDim);

  [[nodiscard]] std::size_t frames() const noexcept { return taus.size(); }
  [[nodiscard]] std::span<const double> frame(std::size_t t) const noexcept {
    return {latents.data() + t * dim, dim};
  }
  std::span<double> frame(std::size_t t) noexcept { return {latents.data() + t * dim, dim}; }
  /// Action leading into frame t, or kNoAction for t == 0.
  [[nodiscard]] int action_into(std::size_t t) const noexcept {
    return t == 0 ? kNoAction : actions[t - 1];
  }

  /// Throws std::invalid_argument if the field sizes disagree.
  void check() const;
};

/// One query position: frame `frame` of trajectory `seq`.
struct FrameRef {
  const LatentTrajectory* seq;
  std::size_t frame;
};

/// Sizes shared by the window networks.
struct NetDims {
  std::size_t latent_dim = kObsDim;
  std::size_t num_actions = kNumActions;
  std::size_t window = 4;
  std::size_t hidden = 128;
};

/// Per-slot width of the action-conditioned denoiser window:
/// [z (d), one-hot previous action incl. a padding slot (N+1), tau].
std::size_t denoiser_slot_width(const NetDims& dims) noexcept;

/// Per-slot width of the action-free windows used by policy, critic and
/// reward-termination nets: [valid flag, z (d), tau].
std::size_t plain_slot_width(const NetDims& dims) noexcept;

/// Causal window features for frames t-W+1..t (oldest first). Slots before
/// the sequence start are zero with the padding action / valid = 0.
Matrix denoiser_features(std::span<const FrameRef> refs, const NetDims& dims);
Matrix plain_features(std::span<const FrameRef> refs, const NetDims& dims);

}  // namespace hilab
