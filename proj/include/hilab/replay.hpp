#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "hilab/rng.hpp"
#include "hilab/toy_env.hpp"
#include "hilab/trajectory.hpp"

namespace hilab {

/// One episode as a frame sequence. `actions[j]` leads from frame j to
/// j+1; `rewards[j]` is the reward received on arrival at frame j.
struct Episode {
  std::vector<Observation> obs;
  std::vector<int> actions;
  std::vector<double> rewards;
  bool terminated = false;
  bool truncated = false;

  [[nodiscard]] std::size_t frames() const noexcept { return obs.size(); }
  [[nodiscard]] bool closed() const noexcept { return terminated || truncated; }
};

inline constexpr double kUniformReplayFraction = 0.7;

struct MixedIndex {
  std::size_t index;
  bool uniform_branch;
};

/// Index into [0, count): uniform with probability 0.7, otherwise
/// floor(x * count) with x ~ Beta(3,1), which favors recent entries.
MixedIndex sample_mixed_index(std::size_t count, Rng& rng);

/// Append-only episode store. The last episode may still be open.
class ReplayBuffer {
 public:
  void begin_episode(const Observation& first);
  void add_step(int action, const StepResult& result);

  [[nodiscard]] const std::vector<Episode>& episodes() const noexcept { return episodes_; }
  [[nodiscard]] std::size_t transitions() const noexcept { return transitions_; }

  /// Segments of L frames, each inside one episode. Episodes shorter than
  /// L are right-padded with their last frame, masked out.
  std::vector<LatentTrajectory> sample_segments(std::size_t batch, std::size_t length, Rng& rng) const;

  /// Like sample_segments but the segment never ends on a terminal frame,
  /// so imagination can continue from it.
  std::vector<LatentTrajectory> sample_contexts(std::size_t batch, std::size_t length, Rng& rng) const;

  /// CSV `episode,t,x,y,action,reward,terminated,truncated`; `action` is
  /// the action leading into frame t (-1 at t = 0).
  void write_csv(const std::filesystem::path& path) const;
  static ReplayBuffer read_csv(const std::filesystem::path& path);

 private:
  std::vector<LatentTrajectory> sample(std::size_t batch, std::size_t length, bool for_context, Rng& rng) const;

  std::vector<Episode> episodes_;
  std::size_t transitions_ = 0;
};

}  // namespace hilab
