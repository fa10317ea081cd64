#include "hilab/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <fstream>
#include <mutex>
#include <random>
#include <stdexcept>
#include <thread>

#include "hilab/csv.hpp"
#include "hilab/imagination.hpp"

namespace hilab {

void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn) {
  const std::size_t workers = std::min(std::max<std::size_t>(threads, 1), n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!error) error = std::current_exception();
          next = n;
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

ActionDistribution sample_dirichlet(std::size_t n, double alpha, Rng& rng) {
  if (n == 0 || !(alpha > 0.0)) throw std::invalid_argument("sample_dirichlet: need n >= 1 and alpha > 0");
  std::gamma_distribution<double> gamma(alpha, 1.0);
  std::vector<double> g(n);
  double sum = 0.0;
  // Tiny alphas can underflow every draw; redraw until the sum is positive.
  do {
    sum = 0.0;
    for (double& v : g) {
      v = gamma(rng);
      sum += v;
    }
  } while (!(sum > 0.0));
  for (double& v : g) v /= sum;
  return ActionDistribution(std::move(g));
}

std::vector<PairsRow> run_pairs_study(const PairsStudyConfig& config) {
  for (std::size_t n : config.ns) {
    if (n < 2) throw std::invalid_argument("pairs-study: N must be at least 2");
  }
  if (config.pairs == 0 || config.draws == 0) throw std::invalid_argument("pairs-study: pairs and draws must be positive");
  const Rng root = Rng(config.seed).fork(Stream::Study);
  const std::size_t per_n = config.pairs + (config.control ? 1 : 0);
  std::vector<PairsRow> rows(config.ns.size() * per_n);
  parallel_for(rows.size(), config.threads, [&](std::size_t u) {
    const std::size_t n = config.ns[u / per_n];
    const std::size_t local = u % per_n;
    const bool control = config.control && local == 0;
    const long pair_id = control ? -1 : static_cast<long>(local - (config.control ? 1 : 0));
    Rng rng = root.fork(n).fork(static_cast<std::uint64_t>(pair_id + 1));
    const ActionDistribution p = sample_dirichlet(n, 1.0, rng);
    const ActionDistribution q = control ? p : sample_dirichlet(n, 1.0, rng);
    std::size_t changes = 0;
    double upper = 0.0;
    for (std::size_t d = 0; d < config.draws; ++d) {
      const DrawState s = DrawState::random(n, rng);
      if (sample_stable(p, s) != sample_stable(q, s)) ++changes;
      upper += change_upper_bound(p, q, s.perm());
    }
    const double rate = static_cast<double>(changes) / static_cast<double>(config.draws);
    const double tv = total_variation(p, q);
    rows[u] = {n, pair_id, tv, upper / static_cast<double>(config.draws), rate, tv > 0.0 ? rate / tv : 0.0};
  });
  return rows;
}

InterpSetting parse_interp_setting(const std::string& s) {
  if (s == "uniform") return {"uniform", 1.0};
  std::size_t pos = 0;
  double a = 0.0;
  try {
    a = std::stod(s, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos == 0 || pos != s.size() || !(a > 0.0) || !std::isfinite(a)) {
    throw std::invalid_argument("invalid alpha setting '" + s + "' (expected a positive number or 'uniform')");
  }
  return {s, a};
}

std::vector<ActionDistribution> interpolation_path(const ActionDistribution& p, const ActionDistribution& q,
                                                   std::size_t ramp_steps, std::size_t hold_steps) {
  if (p.size() != q.size()) throw std::invalid_argument("interpolation_path: dimension mismatch");
  if (ramp_steps == 0) throw std::invalid_argument("interpolation_path: ramp_steps must be positive");
  std::vector<ActionDistribution> path;
  for (std::size_t s = 0; s <= ramp_steps + hold_steps; ++s) {
    if (s >= ramp_steps) {
      path.push_back(q);
      continue;
    }
    const double w = static_cast<double>(s) / static_cast<double>(ramp_steps);
    std::vector<double> v(p.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = (1.0 - w) * p[i] + w * q[i];
    path.emplace_back(std::move(v));
  }
  return path;
}

std::vector<InterpRow> run_interp_study(const InterpStudyConfig& config) {
  if (config.n < 2 || config.pairs == 0 || config.sims == 0) {
    throw std::invalid_argument("interp-study: need N >= 2 and positive pairs and sims");
  }
  const Rng root = Rng(config.seed).fork(Stream::Study);
  const std::size_t units = config.settings.size() * config.pairs;
  std::vector<InterpRow> rows(units * 2);
  parallel_for(units, config.threads, [&](std::size_t u) {
    const InterpSetting& setting = config.settings[u / config.pairs];
    const std::size_t pair_id = u % config.pairs;
    Rng rng = root.fork(u / config.pairs).fork(pair_id);
    const ActionDistribution p = sample_dirichlet(config.n, setting.alpha, rng);
    const ActionDistribution q = sample_dirichlet(config.n, setting.alpha, rng);
    const auto path = interpolation_path(p, q, config.ramp_steps, config.hold_steps);
    Rng stable_rng = rng.fork(1);
    Rng naive_rng = rng.fork(2);
    double sum[2] = {0.0, 0.0};
    double sumsq[2] = {0.0, 0.0};
    for (std::size_t sim = 0; sim < config.sims; ++sim) {
      const DrawState s = DrawState::random(config.n, stable_rng);
      std::size_t prev_stable = sample_stable(path[0], s);
      std::size_t prev_naive = sample_naive(path[0], naive_rng);
      double c[2] = {0.0, 0.0};
      for (std::size_t t = 1; t < path.size(); ++t) {
        const std::size_t a = sample_stable(path[t], s);
        const std::size_t b = sample_naive(path[t], naive_rng);
        c[0] += a != prev_stable ? 1.0 : 0.0;
        c[1] += b != prev_naive ? 1.0 : 0.0;
        prev_stable = a;
        prev_naive = b;
      }
      for (int m = 0; m < 2; ++m) {
        sum[m] += c[m];
        sumsq[m] += c[m] * c[m];
      }
    }
    const double m = static_cast<double>(config.sims);
    for (int k = 0; k < 2; ++k) {
      const double mean = sum[k] / m;
      const double var = config.sims > 1 ? std::max(0.0, (sumsq[k] - m * mean * mean) / (m - 1.0)) : 0.0;
      rows[2 * u + static_cast<std::size_t>(k)] = {setting.name, k == 0 ? "stable" : "naive", pair_id, mean,
                                                   std::sqrt(var)};
    }
  });
  return rows;
}

std::vector<std::pair<double, std::size_t>> gen_quality_grid(const GenQualityConfig& config) {
  std::vector<std::pair<double, std::size_t>> cells;
  for (double nu : config.nus) {
    if (nu < 1.0 || nu > static_cast<double>(config.horizon)) continue;
    for (std::size_t b : config.budgets) {
      if (config.kind == ScheduleKind::Pyramidal && b < config.horizon) continue;
      if (config.kind == ScheduleKind::Horizon && nu == 1.0 && b % config.horizon != 0) continue;
      cells.emplace_back(nu, b);
    }
  }
  return cells;
}

std::vector<GenQualityRow> run_gen_quality(const Denoiser& denoiser, const ReplayBuffer& replay,
                                           const GenQualityConfig& config) {
  if (config.context == 0 || config.segments == 0) {
    throw std::invalid_argument("gen-quality: context and segments must be positive");
  }
  const Rng root = Rng(config.seed).fork(Stream::Study);
  Rng seg_rng = root.fork(1);
  const std::size_t k = config.context;
  const std::size_t h = config.horizon;
  const std::size_t d = denoiser.dims().latent_dim;
  const std::vector<LatentTrajectory> segments = replay.sample_segments(config.segments, k + h, seg_rng);
  std::vector<LatentTrajectory> contexts;
  std::vector<std::vector<double>> noise;
  for (std::size_t i = 0; i < segments.size(); ++i) {
    const LatentTrajectory& seg = segments[i];
    LatentTrajectory c = LatentTrajectory::zeros(k, d);
    std::copy(seg.latents.begin(), seg.latents.begin() + static_cast<std::ptrdiff_t>(k * d), c.latents.begin());
    std::copy(seg.actions.begin(), seg.actions.begin() + static_cast<std::ptrdiff_t>(k - 1), c.actions.begin());
    contexts.push_back(std::move(c));
    Rng nr = root.fork(2).fork(i);
    std::vector<double> z(h * d);
    for (double& v : z) v = nr.uniform(-1.0, 1.0);
    noise.push_back(std::move(z));
  }

  const auto cells = gen_quality_grid(config);
  std::vector<GenQualityRow> rows(cells.size());
  parallel_for(cells.size(), config.threads, [&](std::size_t c) {
    const ScheduleSpec spec{h, cells[c].second, cells[c].first, config.kind};
    double sq = 0.0;
    std::size_t count = 0;
    for (std::size_t i = 0; i < segments.size(); ++i) {
      const LatentTrajectory gen = generate_with_actions(denoiser, spec, contexts[i], segments[i].actions, noise[i]);
      for (std::size_t t = k; t < k + h; ++t) {
        if (!segments[i].mask[t]) continue;
        for (std::size_t j = 0; j < d; ++j) {
          const double e = gen.latents[t * d + j] - segments[i].latents[t * d + j];
          sq += e * e;
        }
        count += d;
      }
    }
    if (count == 0) throw std::runtime_error("gen-quality: every sampled frame is padding");
    rows[c] = {cells[c].first, cells[c].second, sq / static_cast<double>(count)};
    if (!std::isfinite(rows[c].mse)) throw std::runtime_error("gen-quality: non-finite MSE");
  });
  return rows;
}

std::vector<SeedSummary> run_train_command(const TrainCommandConfig& config, const std::filesystem::path& out_dir) {
  if (config.seeds == 0) throw std::invalid_argument("train: --seeds must be positive");
  config.agent.check();
  std::filesystem::create_directories(out_dir);
  std::vector<SeedSummary> out(config.seeds);
  parallel_for(config.seeds, config.threads, [&](std::size_t i) {
    AgentConfig cfg = config.agent;
    cfg.seed = config.agent.seed + i;
    const auto dir = out_dir / ("seed_" + std::to_string(i));
    out[i] = {cfg.seed, run_training(cfg, dir)};
    CsvWriter curve(out_dir / ("returns_seed_" + std::to_string(i) + ".csv"), {"train", cfg.seed, to_config_text(cfg)},
                    {"epoch", "mean_return"});
    for (std::size_t e = 0; e < out[i].result.epoch_returns.size(); ++e) {
      curve.row({std::to_string(e + 1), fmt_num(out[i].result.epoch_returns[e])});
    }
  });

  CsvWriter summary(out_dir / "summary.csv", {"train", config.agent.seed, to_config_text(config.agent)},
                    {"seed", "final_return", "greedy_steps"});
  for (const auto& s : out) {
    summary.row({std::to_string(s.seed), fmt_num(s.result.final_return),
                 s.result.greedy_steps ? std::to_string(*s.result.greedy_steps) : "-1"});
  }

  if (!config.trace_path.empty()) {
    const AgentModels models = load_agent_checkpoint(out.front().result.model_path);
    const ReplayBuffer replay = ReplayBuffer::read_csv(out_dir / "seed_0" / "replay.csv");
    Rng rng = Rng(config.agent.seed).fork(Stream::Study);
    const auto contexts = replay.sample_contexts(1, config.agent.context, rng);
    const ImaginationConfig icfg{config.agent.schedule, config.agent.context, config.agent.mode, true};
    const auto rollouts = horizon_imagine(models.denoiser, models.policy, models.reward_term, icfg, contexts, rng);
    std::ofstream f(config.trace_path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + config.trace_path.string());
    write_trace_csv(f, rollouts.front());
  }
  return out;
}

}  // namespace hilab
