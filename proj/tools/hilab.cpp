// hilab: command-line front end for the studies and the training loop.

#include <CLI11.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "hilab/agent_loop.hpp"
#include "hilab/csv.hpp"
#include "hilab/experiments.hpp"
#include "hilab/schedules.hpp"

namespace fs = std::filesystem;
using namespace hilab;

namespace {

struct Globals {
  std::uint64_t seed = 0;
  std::string out;
  std::size_t threads = 1;
};

template <typename T>
std::string join(const std::vector<T>& v) {
  std::ostringstream s;
  for (std::size_t i = 0; i < v.size(); ++i) s << (i ? ";" : "") << v[i];
  return s.str();
}

fs::path out_or(const Globals& g, const char* fallback) { return g.out.empty() ? fs::path(fallback) : fs::path(g.out); }

std::string file_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void ensure_parent(const fs::path& p) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Horizon Imagination lab: coupled action sampling, denoising schedules and a toy world-model agent"};
  app.require_subcommand(1);
  app.fallthrough();

  Globals g;
  app.add_option("--seed", g.seed, "Root seed")->capture_default_str();
  app.add_option("--out", g.out, "Output file (or directory for train)");
  app.add_option("--threads", g.threads, "Worker threads")->capture_default_str()->check(CLI::PositiveNumber);

  // pairs-study
  PairsStudyConfig pairs;
  auto* pairs_cmd = app.add_subcommand("pairs-study", "Change rate vs. total variation on random distribution pairs");
  pairs_cmd->add_option("--n", pairs.ns, "Action counts")->capture_default_str()->delimiter(',');
  pairs_cmd->add_option("--pairs", pairs.pairs, "Pairs per action count")->capture_default_str();
  pairs_cmd->add_option("--draws", pairs.draws, "Shared draws per pair")->capture_default_str();
  pairs_cmd->add_flag("--control", pairs.control, "Add a p = q control row (pair_id -1) per action count");

  // interp-study
  InterpStudyConfig interp;
  std::vector<std::string> alphas{"0.2", "uniform", "5"};
  auto* interp_cmd = app.add_subcommand("interp-study", "Action changes along an interpolated distribution path");
  interp_cmd->add_option("--alpha", alphas, "Dirichlet settings (number or 'uniform')")
      ->capture_default_str()
      ->delimiter(',');
  interp_cmd->add_option("--actions", interp.n, "Number of actions")->capture_default_str();
  interp_cmd->add_option("--pairs", interp.pairs, "Source-target pairs per setting")->capture_default_str();
  interp_cmd->add_option("--sims", interp.sims, "Simulations per pair")->capture_default_str();

  // schedule-dump
  ScheduleSpec sched_spec;
  std::string sched_kind = "horizon";
  auto* sched_cmd = app.add_subcommand("schedule-dump", "Write a denoising schedule matrix as b,t,tau rows");
  sched_cmd->add_option("--kind", sched_kind, "horizon|pyramidal")->capture_default_str();
  sched_cmd->add_option("--horizon", sched_spec.horizon, "Frames H")->capture_default_str();
  sched_cmd->add_option("--budget", sched_spec.budget, "Denoising steps B")->capture_default_str();
  sched_cmd->add_option("--nu", sched_spec.decay_horizon, "Decay horizon")->capture_default_str();

  // gen-quality
  GenQualityConfig gq;
  std::string gq_checkpoint;
  std::string gq_replay;
  std::string gq_kind = "horizon";
  auto* gq_cmd = app.add_subcommand("gen-quality", "Latent MSE of open-loop generation over a (nu, B) grid");
  gq_cmd->add_option("--checkpoint", gq_checkpoint, "Model checkpoint (.hilm)")->required()->check(CLI::ExistingFile);
  gq_cmd->add_option("--replay", gq_replay, "Replay dump (replay.csv)")->required()->check(CLI::ExistingFile);
  gq_cmd->add_option("--nu", gq.nus, "Decay horizons")->capture_default_str()->delimiter(',');
  gq_cmd->add_option("--budget", gq.budgets, "Budgets")->capture_default_str()->delimiter(',');
  gq_cmd->add_option("--segments", gq.segments, "Sampled segments")->capture_default_str();
  gq_cmd->add_option("--horizon", gq.horizon, "Generated frames per segment")->capture_default_str();
  gq_cmd->add_option("--kind", gq_kind, "horizon|pyramidal")->capture_default_str();

  // train
  TrainCommandConfig train;
  std::string train_config;
  std::string train_mode;
  std::size_t train_budget = 0;
  double train_nu = 0.0;
  std::size_t train_epochs = 0;
  std::vector<std::string> overrides;
  std::string trace;
  auto* train_cmd = app.add_subcommand("train", "Train the agent in imagination, one run per seed");
  train_cmd->add_option("--config", train_config, "Flat key = value config file")->check(CLI::ExistingFile);
  train_cmd->add_option("--mode", train_mode, "stable|naive (overrides sampling.mode)");
  train_cmd->add_option("--budget", train_budget, "Overrides schedule.budget");
  train_cmd->add_option("--nu", train_nu, "Overrides schedule.nu");
  train_cmd->add_option("--epochs", train_epochs, "Overrides train.epochs");
  train_cmd->add_option("--seeds", train.seeds, "Number of seeds (seed, seed+1, ...)")->capture_default_str();
  train_cmd->add_option("--set", overrides, "Extra key=value config entries");
  train_cmd->add_option("--dump-trace", trace, "Write a b,t,tau,action,change_flag trace of one rollout");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*pairs_cmd) {
      pairs.seed = g.seed;
      pairs.threads = g.threads;
      const auto rows = run_pairs_study(pairs);
      const fs::path out = out_or(g, "pairs_study.csv");
      ensure_parent(out);
      const std::string cfg = "n=" + join(pairs.ns) + " pairs=" + std::to_string(pairs.pairs) +
                              " draws=" + std::to_string(pairs.draws) + " control=" + std::to_string(pairs.control);
      CsvWriter w(out, {"pairs-study", g.seed, cfg}, {"n", "pair_id", "tv", "upper", "empirical_rate", "rate_over_tv"});
      for (const auto& r : rows) {
        w.row({std::to_string(r.n), std::to_string(r.pair_id), fmt_num(r.tv), fmt_num(r.upper),
               fmt_num(r.empirical_rate), fmt_num(r.rate_over_tv)});
      }
    } else if (*interp_cmd) {
      interp.settings.clear();
      for (const auto& a : alphas) interp.settings.push_back(parse_interp_setting(a));
      interp.seed = g.seed;
      interp.threads = g.threads;
      const auto rows = run_interp_study(interp);
      const fs::path out = out_or(g, "interp_study.csv");
      ensure_parent(out);
      const std::string cfg = "alpha=" + join(alphas) + " actions=" + std::to_string(interp.n) +
                              " pairs=" + std::to_string(interp.pairs) + " sims=" + std::to_string(interp.sims);
      CsvWriter w(out, {"interp-study", g.seed, cfg}, {"setting", "mode", "pair_id", "mean_changes", "std_changes"});
      for (const auto& r : rows) {
        w.row({r.setting, r.mode, std::to_string(r.pair_id), fmt_num(r.mean_changes), fmt_num(r.std_changes)});
      }
    } else if (*sched_cmd) {
      sched_spec.kind = parse_schedule_kind(sched_kind);
      const ScheduleMatrix k = make_schedule(sched_spec);
      const fs::path out = out_or(g, "schedule.csv");
      ensure_parent(out);
      const std::string cfg = "kind=" + sched_kind + " horizon=" + std::to_string(sched_spec.horizon) +
                              " budget=" + std::to_string(sched_spec.budget) + " nu=" + fmt_num(sched_spec.decay_horizon);
      CsvWriter w(out, {"schedule-dump", g.seed, cfg}, {"b", "t", "tau"});
      for (std::size_t b = 0; b < k.rows(); ++b) {
        for (std::size_t t = 0; t < k.cols(); ++t) w.row({std::to_string(b), std::to_string(t), fmt_num(k(b, t))});
      }
    } else if (*gq_cmd) {
      gq.kind = parse_schedule_kind(gq_kind);
      gq.seed = g.seed;
      gq.threads = g.threads;
      const AgentModels models = load_agent_checkpoint(gq_checkpoint);
      const ReplayBuffer replay = ReplayBuffer::read_csv(gq_replay);
      const auto rows = run_gen_quality(models.denoiser, replay, gq);
      const fs::path out = out_or(g, "gen_quality.csv");
      ensure_parent(out);
      const std::string cfg = "nu=" + join(gq.nus) + " budget=" + join(gq.budgets) + " segments=" +
                              std::to_string(gq.segments) + " horizon=" + std::to_string(gq.horizon) + " kind=" +
                              gq_kind + " checkpoint=" + std::to_string(fnv1a(file_bytes(gq_checkpoint))) +
                              " replay=" + std::to_string(fnv1a(file_bytes(gq_replay)));
      CsvWriter w(out, {"gen-quality", g.seed, cfg}, {"nu", "budget", "mse"});
      for (const auto& r : rows) w.row({fmt_num(r.nu), std::to_string(r.budget), fmt_num(r.mse)});
    } else if (*train_cmd) {
      AgentConfig cfg;
      if (!train_config.empty()) cfg = load_agent_config(train_config);
      for (const auto& kv : overrides) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw std::invalid_argument("--set expects key=value, got '" + kv + "'");
        apply_config_entry(cfg, kv.substr(0, eq), kv.substr(eq + 1));
      }
      if (!train_mode.empty()) cfg.mode = parse_sampling_mode(train_mode);
      if (train_budget) cfg.schedule.budget = train_budget;
      if (train_nu > 0.0) cfg.schedule.decay_horizon = train_nu;
      if (train_epochs) cfg.epochs = train_epochs;
      cfg.seed = g.seed;
      train.agent = cfg;
      train.threads = g.threads;
      train.trace_path = trace;
      const fs::path out = out_or(g, "runs");
      const auto summary = run_train_command(train, out);
      for (const auto& s : summary) {
        std::cout << "seed " << s.seed << " final_return " << fmt_num(s.result.final_return) << " greedy_steps "
                  << (s.result.greedy_steps ? std::to_string(*s.result.greedy_steps) : "none") << '\n';
      }
    }
  } catch (const std::exception& e) {
    std::cerr << "hilab: error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
