#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "hilab/actor_critic.hpp"
#include "hilab/flow_model.hpp"
#include "hilab/imagination.hpp"
#include "hilab/nn.hpp"
#include "hilab/replay.hpp"
#include "hilab/schedules.hpp"
#include "hilab/toy_env.hpp"

namespace hilab {

struct AgentConfig {
  RingWorldConfig env;
  ScheduleSpec schedule;
  SamplingMode mode = SamplingMode::Stable;

  std::size_t epochs = 60;
  std::size_t collect_steps = 100;
  std::size_t wm_steps = 100;
  std::size_t ac_steps = 25;
  std::size_t wm_warmup = 2;  ///< first epoch (1-based) with world-model updates
  std::size_t ac_warmup = 5;  ///< first epoch with actor-critic updates

  std::size_t wm_batch = 8;
  std::size_t wm_segment = 32;
  std::size_t imagination_batch = 30;
  std::size_t context = 1;

  std::size_t window = 4;
  std::size_t wm_hidden = 128;
  std::size_t ac_hidden = 64;

  double gamma = 0.99;
  double lambda = 0.95;
  double entropy_weight = 1e-3;
  AdamConfig wm_adam;
  AdamConfig ac_adam;

  std::size_t eval_episodes = 16;
  std::size_t final_eval_episodes = 64;
  std::size_t keep_checkpoints = 3;
  std::uint64_t seed = 0;

  /// Throws std::invalid_argument on inconsistent values.
  void check() const;
};

/// Sets one `key = value` entry; throws std::invalid_argument on unknown
/// keys or unparsable values.
void apply_config_entry(AgentConfig& config, const std::string& key, const std::string& value);

/// Flat `key = value` text. '#' starts a comment; blank lines are ignored.
AgentConfig parse_agent_config(std::istream& in, AgentConfig base = {});
AgentConfig load_agent_config(const std::filesystem::path& path, AgentConfig base = {});

/// Canonical `key = value` listing of every field, for hashing and logs.
std::string to_config_text(const AgentConfig& config);

/// The four trained networks.
struct AgentModels {
  Denoiser denoiser;
  RewardTermModel reward_term;
  PolicyModel policy;
  CriticModel critic;

  static AgentModels init(const AgentConfig& config, Rng& rng);
};

void save_agent_checkpoint(const std::filesystem::path& path, const AgentModels& models);
AgentModels load_agent_checkpoint(const std::filesystem::path& path);

struct ControllerStats {
  double actor_loss = 0.0;
  double critic_loss = 0.0;
  double entropy = 0.0;
  double mean_return = 0.0;  ///< mean lambda-return of the first imagined state
  double ema_spread = 0.0;
  std::size_t actor_samples = 0;
};

/// One actor-critic update from a batch of imagined rollouts.
ControllerStats controller_step(AgentModels& models, AdamW& policy_opt, AdamW& critic_opt, AdvantageScaler& scaler,
                                const AgentConfig& config, std::span<const LatentTrajectory> contexts,
                                const Rng& rng);

/// Mean discounted return of `episodes` episodes with actions drawn from
/// the policy on clean observations.
double evaluate_policy(const PolicyModel& policy, const RingWorldConfig& env, double gamma, std::size_t episodes,
                       Rng rng);

/// Steps to reach the goal from reset taking the argmax action, or nullopt
/// if the episode ends without reaching it. Uses noise-free observations.
std::optional<std::size_t> greedy_steps_to_goal(const PolicyModel& policy, const RingWorldConfig& env);

struct TrainingResult {
  std::vector<double> epoch_returns;
  double final_return = 0.0;
  std::optional<std::size_t> greedy_steps;
  std::filesystem::path model_path;
};

/// Runs the agent loop with the configured schedule. Writes into `out_dir`:
/// metrics.csv, returns.csv, replay.csv, model.hilm and rolling
/// checkpoints/epoch_<e>.hilm (last `keep_checkpoints` kept). Progress goes
/// to `log` when given.
TrainingResult run_training(const AgentConfig& config, const std::filesystem::path& out_dir,
                            std::ostream* log = nullptr);

}  // namespace hilab
