#include "hilab/agent_loop.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "hilab/checkpoint.hpp"
#include "hilab/csv.hpp"

namespace hilab {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::uint64_t parse_u64(const std::string& key, const std::string& v) {
  std::size_t pos = 0;
  unsigned long long x = 0;
  try {
    if (!v.empty() && v[0] == '-') throw std::invalid_argument("negative");
    x = std::stoull(v, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos == 0 || pos != v.size()) throw std::invalid_argument(key + ": expected a non-negative integer, got '" + v + "'");
  return x;
}

double parse_real(const std::string& key, const std::string& v) {
  std::size_t pos = 0;
  double x = 0.0;
  try {
    x = std::stod(v, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos == 0 || pos != v.size() || !std::isfinite(x)) {
    throw std::invalid_argument(key + ": expected a number, got '" + v + "'");
  }
  return x;
}

using Setter = std::function<void(AgentConfig&, const std::string&, const std::string&)>;

Setter size_field(std::size_t AgentConfig::*field) {
  return [field](AgentConfig& c, const std::string& k, const std::string& v) { c.*field = parse_u64(k, v); };
}

Setter real_field(double AgentConfig::*field) {
  return [field](AgentConfig& c, const std::string& k, const std::string& v) { c.*field = parse_real(k, v); };
}

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = {
      {"env.ring_size", [](AgentConfig& c, auto& k, auto& v) { c.env.ring_size = parse_u64(k, v); }},
      {"env.goal", [](AgentConfig& c, auto& k, auto& v) { c.env.goal = parse_u64(k, v); }},
      {"env.slip_prob", [](AgentConfig& c, auto& k, auto& v) { c.env.slip_prob = parse_real(k, v); }},
      {"env.obs_noise", [](AgentConfig& c, auto& k, auto& v) { c.env.obs_noise = parse_real(k, v); }},
      {"env.max_steps", [](AgentConfig& c, auto& k, auto& v) { c.env.max_steps = parse_u64(k, v); }},
      {"env.seed", [](AgentConfig& c, auto& k, auto& v) { c.env.seed = parse_u64(k, v); }},
      {"schedule.horizon", [](AgentConfig& c, auto& k, auto& v) { c.schedule.horizon = parse_u64(k, v); }},
      {"schedule.budget", [](AgentConfig& c, auto& k, auto& v) { c.schedule.budget = parse_u64(k, v); }},
      {"schedule.nu", [](AgentConfig& c, auto& k, auto& v) { c.schedule.decay_horizon = parse_real(k, v); }},
      {"schedule.kind", [](AgentConfig& c, auto&, auto& v) { c.schedule.kind = parse_schedule_kind(v); }},
      {"sampling.mode", [](AgentConfig& c, auto&, auto& v) { c.mode = parse_sampling_mode(v); }},
      {"train.epochs", size_field(&AgentConfig::epochs)},
      {"train.collect_steps", size_field(&AgentConfig::collect_steps)},
      {"train.wm_steps", size_field(&AgentConfig::wm_steps)},
      {"train.ac_steps", size_field(&AgentConfig::ac_steps)},
      {"train.wm_warmup", size_field(&AgentConfig::wm_warmup)},
      {"train.ac_warmup", size_field(&AgentConfig::ac_warmup)},
      {"train.wm_batch", size_field(&AgentConfig::wm_batch)},
      {"train.wm_segment", size_field(&AgentConfig::wm_segment)},
      {"train.imagination_batch", size_field(&AgentConfig::imagination_batch)},
      {"train.context", size_field(&AgentConfig::context)},
      {"train.window", size_field(&AgentConfig::window)},
      {"train.wm_hidden", size_field(&AgentConfig::wm_hidden)},
      {"train.ac_hidden", size_field(&AgentConfig::ac_hidden)},
      {"train.gamma", real_field(&AgentConfig::gamma)},
      {"train.lambda", real_field(&AgentConfig::lambda)},
      {"train.entropy_weight", real_field(&AgentConfig::entropy_weight)},
      {"train.wm_lr", [](AgentConfig& c, auto& k, auto& v) { c.wm_adam.lr = parse_real(k, v); }},
      {"train.ac_lr", [](AgentConfig& c, auto& k, auto& v) { c.ac_adam.lr = parse_real(k, v); }},
      {"train.eval_episodes", size_field(&AgentConfig::eval_episodes)},
      {"train.final_eval_episodes", size_field(&AgentConfig::final_eval_episodes)},
      {"train.keep_checkpoints", size_field(&AgentConfig::keep_checkpoints)},
      {"train.seed", [](AgentConfig& c, auto& k, auto& v) { c.seed = parse_u64(k, v); }},
  };
  return table;
}

std::string real_text(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

LatentTrajectory single_frame(const Observation& obs) {
  LatentTrajectory t = LatentTrajectory::zeros(1);
  const Observation z = encode(obs);
  std::copy(z.begin(), z.end(), t.latents.begin());
  return t;
}

void push_frame(LatentTrajectory& t, int action, const Observation& obs) {
  const Observation z = encode(obs);
  t.latents.insert(t.latents.end(), z.begin(), z.end());
  t.actions.push_back(action);
  t.taus.push_back(1.0);
  t.rewards.push_back(0.0);
  t.terms.push_back(0);
  t.mask.push_back(1);
}

std::size_t policy_action(const PolicyModel& policy, const LatentTrajectory& live, Rng& rng) {
  const FrameRef ref{&live, live.frames() - 1};
  return sample_naive(policy.distributions(std::span(&ref, 1)).front(), rng);
}

}  // namespace

void AgentConfig::check() const {
  env.check();
  schedule.check();
  if (epochs == 0) throw std::invalid_argument("train.epochs must be positive");
  if (wm_warmup > ac_warmup) throw std::invalid_argument("train.wm_warmup must not exceed train.ac_warmup");
  if (wm_batch == 0 || imagination_batch == 0) throw std::invalid_argument("batch sizes must be positive");
  if (wm_segment < 2) throw std::invalid_argument("train.wm_segment must be at least 2");
  if (context == 0) throw std::invalid_argument("train.context must be at least 1 for actor-critic training");
  if (window == 0 || wm_hidden == 0 || ac_hidden == 0) throw std::invalid_argument("network sizes must be positive");
  if (!(gamma > 0.0 && gamma <= 1.0)) throw std::invalid_argument("train.gamma must lie in (0, 1]");
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw std::invalid_argument("train.lambda must lie in [0, 1]");
  if (entropy_weight < 0.0) throw std::invalid_argument("train.entropy_weight must be non-negative");
  if (!(wm_adam.lr > 0.0) || !(ac_adam.lr > 0.0)) throw std::invalid_argument("learning rates must be positive");
  if (eval_episodes == 0 || final_eval_episodes == 0) throw std::invalid_argument("eval episode counts must be positive");
  if (keep_checkpoints == 0) throw std::invalid_argument("train.keep_checkpoints must be positive");
}

void apply_config_entry(AgentConfig& config, const std::string& key, const std::string& value) {
  const auto it = setters().find(key);
  if (it == setters().end()) throw std::invalid_argument("unknown config key '" + key + "'");
  it->second(config, key, value);
}

AgentConfig parse_agent_config(std::istream& in, AgentConfig base) {
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument("config line " + std::to_string(lineno) + ": expected 'key = value'");
    }
    try {
      apply_config_entry(base, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    } catch (const std::invalid_argument& e) {
      throw std::invalid_argument("config line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return base;
}

AgentConfig load_agent_config(const std::filesystem::path& path, AgentConfig base) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open config file " + path.string());
  return parse_agent_config(in, std::move(base));
}

std::string to_config_text(const AgentConfig& c) {
  std::ostringstream s;
  s << "env.ring_size = " << c.env.ring_size << '\n'
    << "env.goal = " << c.env.goal << '\n'
    << "env.slip_prob = " << real_text(c.env.slip_prob) << '\n'
    << "env.obs_noise = " << real_text(c.env.obs_noise) << '\n'
    << "env.max_steps = " << c.env.max_steps << '\n'
    << "env.seed = " << c.env.seed << '\n'
    << "schedule.horizon = " << c.schedule.horizon << '\n'
    << "schedule.budget = " << c.schedule.budget << '\n'
    << "schedule.nu = " << real_text(c.schedule.decay_horizon) << '\n'
    << "schedule.kind = " << to_string(c.schedule.kind) << '\n'
    << "sampling.mode = " << to_string(c.mode) << '\n'
    << "train.epochs = " << c.epochs << '\n'
    << "train.collect_steps = " << c.collect_steps << '\n'
    << "train.wm_steps = " << c.wm_steps << '\n'
    << "train.ac_steps = " << c.ac_steps << '\n'
    << "train.wm_warmup = " << c.wm_warmup << '\n'
    << "train.ac_warmup = " << c.ac_warmup << '\n'
    << "train.wm_batch = " << c.wm_batch << '\n'
    << "train.wm_segment = " << c.wm_segment << '\n'
    << "train.imagination_batch = " << c.imagination_batch << '\n'
    << "train.context = " << c.context << '\n'
    << "train.window = " << c.window << '\n'
    << "train.wm_hidden = " << c.wm_hidden << '\n'
    << "train.ac_hidden = " << c.ac_hidden << '\n'
    << "train.gamma = " << real_text(c.gamma) << '\n'
    << "train.lambda = " << real_text(c.lambda) << '\n'
    << "train.entropy_weight = " << real_text(c.entropy_weight) << '\n'
    << "train.wm_lr = " << real_text(c.wm_adam.lr) << '\n'
    << "train.ac_lr = " << real_text(c.ac_adam.lr) << '\n'
    << "train.eval_episodes = " << c.eval_episodes << '\n'
    << "train.final_eval_episodes = " << c.final_eval_episodes << '\n'
    << "train.keep_checkpoints = " << c.keep_checkpoints << '\n'
    << "train.seed = " << c.seed << '\n';
  return s.str();
}

AgentModels AgentModels::init(const AgentConfig& config, Rng& rng) {
  const NetDims wm{kObsDim, kNumActions, config.window, config.wm_hidden};
  const NetDims ac{kObsDim, kNumActions, config.window, config.ac_hidden};
  Rng r1 = rng.fork(1);
  Rng r2 = rng.fork(2);
  Rng r3 = rng.fork(3);
  Rng r4 = rng.fork(4);
  return {Denoiser(wm, r1), RewardTermModel(wm, r2), PolicyModel(ac, r3), CriticModel(ac, r4)};
}

void save_agent_checkpoint(const std::filesystem::path& path, const AgentModels& m) {
  const NetDims& wm = m.denoiser.dims();
  const NetDims& ac = m.policy.dims();
  std::vector<Tensor> tensors;
  tensors.push_back({"meta.dims",
                     {5},
                     {static_cast<double>(wm.latent_dim), static_cast<double>(wm.num_actions),
                      static_cast<double>(wm.window), static_cast<double>(wm.hidden), static_cast<double>(ac.hidden)}});
  append_prefixed(tensors, "denoiser", m.denoiser.net().params());
  append_prefixed(tensors, "reward_term", m.reward_term.net().params());
  append_prefixed(tensors, "policy", m.policy.net().params());
  append_prefixed(tensors, "critic", m.critic.net().params());
  write_checkpoint(path, tensors);
}

AgentModels load_agent_checkpoint(const std::filesystem::path& path) {
  const std::vector<Tensor> tensors = read_checkpoint(path);
  const auto meta = std::find_if(tensors.begin(), tensors.end(), [](const Tensor& t) { return t.name == "meta.dims"; });
  if (meta == tensors.end() || meta->values.size() != 5) {
    throw std::runtime_error(path.string() + ": missing meta.dims tensor");
  }
  const auto& v = meta->values;
  const NetDims wm{static_cast<std::size_t>(v[0]), static_cast<std::size_t>(v[1]), static_cast<std::size_t>(v[2]),
                   static_cast<std::size_t>(v[3])};
  NetDims ac = wm;
  ac.hidden = static_cast<std::size_t>(v[4]);
  try {
    return {Denoiser(wm, Mlp::from_params(extract_prefixed(tensors, "denoiser"))),
            RewardTermModel(wm, Mlp::from_params(extract_prefixed(tensors, "reward_term"))),
            PolicyModel(ac, Mlp::from_params(extract_prefixed(tensors, "policy"))),
            CriticModel(ac, Mlp::from_params(extract_prefixed(tensors, "critic")))};
  } catch (const std::invalid_argument& e) {
    throw std::runtime_error(path.string() + ": " + e.what());
  }
}

ControllerStats controller_step(AgentModels& models, AdamW& policy_opt, AdamW& critic_opt, AdvantageScaler& scaler,
                                const AgentConfig& config, std::span<const LatentTrajectory> contexts,
                                const Rng& rng) {
  const ImaginationConfig icfg{config.schedule, config.context, config.mode, false};
  const std::vector<ImaginedRollout> rollouts =
      horizon_imagine(models.denoiser, models.policy, models.reward_term, icfg, contexts, rng);
  const std::size_t k = config.context;
  const std::size_t h = config.schedule.horizon;
  const ScheduleMatrix sched = make_schedule(config.schedule);

  // States s_0..s_H are frames k-1..k+H-1; transition t leads s_t -> s_{t+1}.
  std::vector<FrameRef> states;
  for (const auto& ro : rollouts) {
    for (std::size_t t = 0; t <= h; ++t) states.push_back({&ro.trajectory, k - 1 + t});
  }
  const std::vector<double> values = models.critic.values(states);

  std::vector<std::vector<double>> returns(rollouts.size());
  std::vector<std::vector<std::uint8_t>> alive(rollouts.size());
  std::vector<double> batch_g;
  std::vector<double> batch_v;
  std::vector<FrameRef> critic_states;
  for (std::size_t r = 0; r < rollouts.size(); ++r) {
    const LatentTrajectory& traj = rollouts[r].trajectory;
    std::vector<double> rew(h + 1, 0.0);
    std::vector<std::uint8_t> term(h + 1, 0);
    for (std::size_t t = 0; t < h; ++t) {
      rew[t] = traj.rewards[k + t];
      term[t] = traj.terms[k + t];
    }
    const std::span<const double> v(values.data() + r * (h + 1), h + 1);
    returns[r] = lambda_returns(rew, term, v, config.gamma, config.lambda);
    alive[r].assign(h + 1, 0);
    alive[r][0] = 1;
    for (std::size_t t = 0; t < h; ++t) alive[r][t + 1] = alive[r][t] && !term[t];
    for (std::size_t t = 0; t < h; ++t) {
      if (!alive[r][t]) break;
      batch_g.push_back(returns[r][t]);
      batch_v.push_back(v[t]);
      critic_states.push_back(states[r * (h + 1) + t]);
    }
  }
  const std::vector<double> adv_flat = advantages(batch_g, batch_v, scaler);

  std::vector<ActorSample> samples;
  std::size_t offset = 0;
  for (std::size_t r = 0; r < rollouts.size(); ++r) {
    const ImaginedRollout& ro = rollouts[r];
    const std::size_t n_alive = static_cast<std::size_t>(std::count(alive[r].begin(), alive[r].end() - 1, 1));
    const double* a = adv_flat.data() + offset;
    offset += n_alive;
    samples.push_back({{&ro.trajectory, k - 1}, static_cast<std::size_t>(ro.trajectory.actions[k - 1]), a[0]});
    for (std::size_t b = 0; b < ro.steps.size(); ++b) {
      for (const SlotQuery& q : ro.steps[b].queries) {
        if (!(sched(b + 1, q.slot + 1) > sched(b, q.slot + 1))) continue;
        if (!alive[r][q.slot + 1]) continue;
        samples.push_back({{&ro.steps[b].snapshot, k + q.slot}, q.action, a[q.slot + 1]});
      }
    }
  }

  ActorLoss al = actor_loss(models.policy, samples, config.entropy_weight);
  LossAndGrad cl = critic_loss(models.critic, critic_states, batch_g);
  if (!std::isfinite(al.loss) || !std::isfinite(cl.loss) || !al.grads.all_finite() || !cl.grads.all_finite()) {
    throw std::runtime_error("controller_step: non-finite actor/critic loss (" + std::to_string(al.loss) + ", " +
                             std::to_string(cl.loss) + ")");
  }
  policy_opt.step(models.policy.net().params(), al.grads);
  critic_opt.step(models.critic.net().params(), cl.grads);

  ControllerStats s;
  s.actor_loss = al.loss;
  s.critic_loss = cl.loss;
  s.entropy = al.mean_entropy;
  for (const auto& g : returns) s.mean_return += g[0];
  s.mean_return /= static_cast<double>(std::max<std::size_t>(returns.size(), 1));
  s.ema_spread = scaler.ema_spread;
  s.actor_samples = samples.size();
  return s;
}

double evaluate_policy(const PolicyModel& policy, const RingWorldConfig& env_cfg, double gamma, std::size_t episodes,
                       Rng rng) {
  double total = 0.0;
  for (std::size_t i = 0; i < episodes; ++i) {
    Rng ep = rng.fork(i);
    RingWorld env(env_cfg);
    LatentTrajectory live = single_frame(env.reset(ep.next()));
    double discount = 1.0;
    while (true) {
      const std::size_t a = policy_action(policy, live, ep);
      const StepResult res = env.step(a);
      total += discount * res.reward;
      discount *= gamma;
      if (res.terminated || res.truncated) break;
      push_frame(live, static_cast<int>(a), res.obs);
    }
  }
  return total / static_cast<double>(episodes);
}

std::optional<std::size_t> greedy_steps_to_goal(const PolicyModel& policy, const RingWorldConfig& env_cfg) {
  RingWorldConfig cfg = env_cfg;
  cfg.obs_noise = 0.0;
  cfg.slip_prob = 0.0;
  RingWorld env(cfg);
  LatentTrajectory live = single_frame(env.reset(0));
  for (std::size_t step = 1;; ++step) {
    const FrameRef ref{&live, live.frames() - 1};
    const Matrix logits = policy.logits(std::span(&ref, 1));
    const auto row = logits.row(0);
    const auto a = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
    const StepResult res = env.step(a);
    if (res.terminated) return step;
    if (res.truncated) return std::nullopt;
    push_frame(live, static_cast<int>(a), res.obs);
  }
}

TrainingResult run_training(const AgentConfig& config, const std::filesystem::path& out_dir, std::ostream* log) {
  config.check();
  namespace fs = std::filesystem;
  const fs::path ckpt_dir = out_dir / "checkpoints";
  fs::create_directories(ckpt_dir);

  const Rng root(config.seed);
  Rng init_rng = root.fork(Stream::Init);
  AgentModels models = AgentModels::init(config, init_rng);
  AdamW denoiser_opt(models.denoiser.net().params(), config.wm_adam);
  AdamW reward_opt(models.reward_term.net().params(), config.wm_adam);
  AdamW policy_opt(models.policy.net().params(), config.ac_adam);
  AdamW critic_opt(models.critic.net().params(), config.ac_adam);
  AdvantageScaler scaler;

  Rng collect_rng = root.fork(Stream::Collect);
  Rng wm_rng = root.fork(Stream::WorldModel);
  Rng replay_rng = root.fork(Stream::Replay);
  const Rng imag_rng = root.fork(Stream::Imagination);
  const Rng eval_rng = root.fork(Stream::Eval);

  RingWorld env(config.env);
  Observation obs = env.reset(root.fork(Stream::Env).fork(config.env.seed).next());
  ReplayBuffer buffer;
  buffer.begin_episode(obs);
  LatentTrajectory live = single_frame(obs);

  const CsvMeta meta{"train", config.seed, to_config_text(config)};
  CsvWriter metrics(out_dir / "metrics.csv", meta,
                    {"epoch", "step", "actor_loss", "critic_loss", "entropy", "mean_return", "ema_S"});
  CsvWriter returns_csv(out_dir / "returns.csv", meta, {"epoch", "mean_return"});

  TrainingResult result;
  std::size_t ac_global = 0;
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    for (std::size_t s = 0; s < config.collect_steps; ++s) {
      const std::size_t a = policy_action(models.policy, live, collect_rng);
      const StepResult res = env.step(a);
      buffer.add_step(static_cast<int>(a), res);
      if (res.terminated || res.truncated) {
        obs = env.reset();
        buffer.begin_episode(obs);
        live = single_frame(obs);
      } else {
        push_frame(live, static_cast<int>(a), res.obs);
      }
    }

    if (epoch >= config.wm_warmup) {
      for (std::size_t s = 0; s < config.wm_steps; ++s) {
        try {
          TrainBatch batch = TrainBatch::from_segments(
              buffer.sample_segments(config.wm_batch, config.wm_segment, replay_rng), wm_rng);
          train_step(models.denoiser, denoiser_opt, batch);
          train_step(models.reward_term, reward_opt, batch.clean);
        } catch (const std::runtime_error& e) {
          throw std::runtime_error("epoch " + std::to_string(epoch) + ", world-model step " + std::to_string(s) +
                                   ": " + e.what());
        }
      }
    }

    if (epoch >= config.ac_warmup) {
      for (std::size_t s = 0; s < config.ac_steps; ++s, ++ac_global) {
        ControllerStats st;
        try {
          const auto contexts = buffer.sample_contexts(config.imagination_batch, config.context, replay_rng);
          st = controller_step(models, policy_opt, critic_opt, scaler, config, contexts, imag_rng.fork(ac_global));
        } catch (const std::runtime_error& e) {
          throw std::runtime_error("epoch " + std::to_string(epoch) + ", actor-critic step " + std::to_string(s) +
                                   ": " + e.what());
        }
        metrics.row({std::to_string(epoch), std::to_string(ac_global), fmt_num(st.actor_loss),
                     fmt_num(st.critic_loss), fmt_num(st.entropy), fmt_num(st.mean_return), fmt_num(st.ema_spread)});
      }
    }

    const double ret = evaluate_policy(models.policy, config.env, config.gamma, config.eval_episodes, eval_rng.fork(epoch));
    result.epoch_returns.push_back(ret);
    returns_csv.row({std::to_string(epoch), fmt_num(ret)});
    returns_csv.flush();
    metrics.flush();

    save_agent_checkpoint(ckpt_dir / ("epoch_" + std::to_string(epoch) + ".hilm"), models);
    if (epoch > config.keep_checkpoints) {
      fs::remove(ckpt_dir / ("epoch_" + std::to_string(epoch - config.keep_checkpoints) + ".hilm"));
    }
    if (log) *log << "epoch " << epoch << "/" << config.epochs << " eval_return " << fmt_num(ret) << std::endl;
  }

  result.final_return =
      evaluate_policy(models.policy, config.env, config.gamma, config.final_eval_episodes, eval_rng.fork(0));
  result.greedy_steps = greedy_steps_to_goal(models.policy, config.env);
  result.model_path = out_dir / "model.hilm";
  save_agent_checkpoint(result.model_path, models);
  buffer.write_csv(out_dir / "replay.csv");
  return result;
}

}  // namespace hilab
