#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "hilab/agent_loop.hpp"
#include "hilab/replay.hpp"
#include "hilab/rng.hpp"
#include "hilab/schedules.hpp"
#include "hilab/stable_sampling.hpp"

namespace hilab {

/// Runs fn(0..n-1) on up to `threads` workers. Work items must write only
/// to their own output slot; results are then independent of scheduling.
void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn);

/// Symmetric Dirichlet draw via normalized Gamma variates.
ActionDistribution sample_dirichlet(std::size_t n, double alpha, Rng& rng);

struct PairsStudyConfig {
  std::vector<std::size_t> ns{4, 10, 18};
  std::size_t pairs = 1000;
  std::size_t draws = 10000;
  bool control = false;  ///< add a p = q row per N with pair_id -1
  std::uint64_t seed = 0;
  std::size_t threads = 1;
};

struct PairsRow {
  std::size_t n;
  long pair_id;
  double tv;
  double upper;  ///< ||alpha(p) - alpha(q)||_1 averaged over the drawn orders
  double empirical_rate;
  double rate_over_tv;  ///< 0 when tv is 0
};

std::vector<PairsRow> run_pairs_study(const PairsStudyConfig& config);

/// Dirichlet concentration for the interpolation study. Uniform is 1.
struct InterpSetting {
  std::string name;
  double alpha;
};
InterpSetting parse_interp_setting(const std::string& s);

struct InterpStudyConfig {
  std::vector<InterpSetting> settings{{"0.2", 0.2}, {"uniform", 1.0}, {"5", 5.0}};
  std::size_t n = 10;
  std::size_t ramp_steps = 8;
  std::size_t hold_steps = 8;
  std::size_t pairs = 100;
  std::size_t sims = 10000;
  std::uint64_t seed = 0;
  std::size_t threads = 1;
};

struct InterpRow {
  std::string setting;
  std::string mode;
  std::size_t pair_id;
  double mean_changes;
  double std_changes;
};

/// Distribution path p_s = (1 - w_s) p + w_s q, w_s = min(1, s / ramp) for
/// s = 0..ramp+hold.
std::vector<ActionDistribution> interpolation_path(const ActionDistribution& p, const ActionDistribution& q,
                                                   std::size_t ramp_steps, std::size_t hold_steps);

std::vector<InterpRow> run_interp_study(const InterpStudyConfig& config);

struct GenQualityConfig {
  std::vector<double> nus{1, 2, 4, 8, 16, 32};
  std::vector<std::size_t> budgets{2, 4, 8, 16, 32, 64, 128};
  std::size_t horizon = 32;
  std::size_t context = 1;
  std::size_t segments = 512;
  ScheduleKind kind = ScheduleKind::Horizon;
  std::uint64_t seed = 0;
  std::size_t threads = 1;
};

struct GenQualityRow {
  double nu;
  std::size_t budget;
  double mse;
};

/// Grid cells in output order. nu = 1 keeps only budgets that are
/// multiples of the horizon; Pyramidal drops budgets below the horizon.
std::vector<std::pair<double, std::size_t>> gen_quality_grid(const GenQualityConfig& config);

/// Mean latent MSE of open-loop generations against recorded segments.
/// Every cell sees the same segments and noise.
std::vector<GenQualityRow> run_gen_quality(const Denoiser& denoiser, const ReplayBuffer& replay,
                                           const GenQualityConfig& config);

/// Files written by `train`, one set per seed.
struct TrainCommandConfig {
  AgentConfig agent;
  std::size_t seeds = 1;
  std::size_t threads = 1;
  std::filesystem::path trace_path;  ///< empty: no trace dump
};

struct SeedSummary {
  std::uint64_t seed;
  TrainingResult result;
};

std::vector<SeedSummary> run_train_command(const TrainCommandConfig& config, const std::filesystem::path& out_dir);

}  // namespace hilab
