#pragma once

#include <cstddef>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "hilab/actor_critic.hpp"
#include "hilab/flow_model.hpp"
#include "hilab/rng.hpp"
#include "hilab/schedules.hpp"
#include "hilab/stable_sampling.hpp"
#include "hilab/trajectory.hpp"

namespace hilab {

enum class SamplingMode { Stable, Naive };

SamplingMode parse_sampling_mode(const std::string& s);
std::string to_string(SamplingMode mode);

struct ImaginationConfig {
  ScheduleSpec schedule;
  std::size_t context = 1;
  SamplingMode mode = SamplingMode::Stable;
  /// Recompute every slot's distribution at every step, as opposed to only
  /// the slots whose next frame is being denoised. Final rollouts are the
  /// same in Stable mode; only the per-step trace differs.
  bool query_all_slots = false;

  void check() const;
};

/// Policy query for one action slot at one denoising step.
struct SlotQuery {
  std::size_t slot;
  ActionDistribution dist;
  std::size_t action;
};

/// State of a rollout just before denoising step b, plus the queries made
/// at that step.
struct StepRecord {
  LatentTrajectory snapshot;
  std::vector<SlotQuery> queries;
};

/// One imagined trajectory with k context frames and H generated frames.
///
/// Slot i (0 <= i < H-1) is the action leaving generated frame k+i, i.e.
/// `trajectory.actions[k+i]`. With k > 0 the first action
/// `trajectory.actions[k-1]` is a plain draw on the clean context.
struct ImaginedRollout {
  std::size_t context = 0;
  LatentTrajectory trajectory;
  std::vector<double> term_probs;  ///< per frame; 0 for context frames
  std::vector<StepRecord> steps;   ///< B records
  /// action_trace[b][slot]: the slot's action after step b's query, or
  /// kNoAction when the slot has not been queried yet.
  std::vector<std::vector<int>> action_trace;
  std::size_t denoiser_passes = 0;

  [[nodiscard]] std::size_t horizon() const noexcept { return trajectory.frames() - context; }
};

/// Randomness for one rollout, drawn before any denoising happens.
struct RolloutNoise {
  std::vector<double> latents;       ///< H x d, U([-1,1])
  std::vector<DrawState> draws;      ///< one per action slot (H-1)
  Rng first_action;                  ///< plain draw of the first action
  Rng naive;                         ///< forked per (step, slot) in Naive mode
};

/// Draws noise latents first, then the H-1 DrawStates, from `rng`.
RolloutNoise sample_rollout_noise(std::size_t horizon, std::size_t latent_dim, std::size_t num_actions,
                                  Rng& rng);

/// Horizon imagination over a batch of contexts. Rollout r uses `rng.fork(r)`. Each
/// context must hold exactly `config.context` clean frames. All rollouts
/// share one batched policy pass and one batched denoiser pass per step.
std::vector<ImaginedRollout> horizon_imagine(const Denoiser& denoiser, const PolicyModel& policy,
                                             const RewardTermModel& reward_term, const ImaginationConfig& config,
                                             std::span<const LatentTrajectory> contexts, const Rng& rng);

/// Open-loop generation: H frames after `context` using the given actions
/// (`actions.size() == context.frames() + H - 1`) under schedule `spec`.
/// Returns the completed trajectory.
LatentTrajectory generate_with_actions(const Denoiser& denoiser, const ScheduleSpec& spec,
                                       const LatentTrajectory& context, std::span<const int> actions,
                                       std::span<const double> noise);

/// Number of consecutive-step changes per slot, ignoring unqueried steps.
std::vector<std::size_t> count_action_changes(const ImaginedRollout& rollout);

/// Number of b >= 1 with seq[b] != seq[b-1].
std::size_t count_changes(std::span<const int> seq);

/// Per-step trace `b,t,tau,action,change_flag`, one row per (step, slot).
void write_trace_csv(std::ostream& out, const ImaginedRollout& rollout);

}  // namespace hilab
