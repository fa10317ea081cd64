// Acceptance checks. Each criterion prints one PASS/FAIL line; the exit
// status is nonzero if any selected criterion fails.

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <thread>
#include <vector>

#include "hilab/actor_critic.hpp"
#include "hilab/agent_loop.hpp"
#include "hilab/csv.hpp"
#include "hilab/experiments.hpp"
#include "hilab/imagination.hpp"
#include "hilab/schedules.hpp"
#include "hilab/stable_sampling.hpp"
#include "support/fd.hpp"
#include "support/oracles.hpp"
#include "support/traj.hpp"

namespace fs = std::filesystem;
using namespace hilab;

namespace {

struct Outcome {
  bool pass;
  std::string detail;
};

std::string fmt(const char* f, double a) {
  char buf[128];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

std::size_t worker_count() { return std::max(1u, std::thread::hardware_concurrency()); }

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

Outcome p1_marginals() {
  Rng rng = Rng(1).fork(Stream::Study);
  double worst_ratio = 0.0;
  std::size_t failures = 0;
  for (std::size_t n : {2u, 5u, 10u, 20u}) {
    const double bound = 3.0 * std::sqrt(static_cast<double>(n) / 1e5);
    for (int i = 0; i < 100; ++i) {
      const auto p = sample_dirichlet(n, 1.0, rng);
      std::vector<double> freq(n, 0.0);
      for (int d = 0; d < 100000; ++d) freq[sample_stable(p, DrawState::random(n, rng))] += 1e-5;
      const double tv = total_variation(p, ActionDistribution(freq));
      worst_ratio = std::max(worst_ratio, tv / bound);
      failures += tv >= bound;
    }
  }
  return {failures == 0, std::to_string(failures) + " of 400 distributions over the bound; worst tv/bound " +
                             fmt("%.3f", worst_ratio)};
}

Outcome p2_sandwich() {
  PairsStudyConfig c;
  c.ns = {10};
  c.pairs = 1000;
  c.draws = 10000;
  c.seed = 2;
  c.threads = worker_count();
  const double eps = 0.015;
  std::size_t violations = 0;
  double lower_slack = 1.0;
  double upper_slack = 1.0;
  for (const auto& r : run_pairs_study(c)) {
    violations += r.empirical_rate < r.tv - eps || r.empirical_rate > r.upper + eps;
    lower_slack = std::min(lower_slack, r.empirical_rate - r.tv + eps);
    upper_slack = std::min(upper_slack, r.upper + eps - r.empirical_rate);
  }
  return {violations == 0, std::to_string(violations) + " violations in 1000 pairs; min slack lower " +
                               fmt("%.4f", lower_slack) + ", upper " + fmt("%.4f", upper_slack)};
}

Outcome p3_zero_change() {
  Rng rng = Rng(3).fork(Stream::Study);
  std::size_t mismatches = 0;
  for (int i = 0; i < 1000; ++i) {
    const std::size_t n = 2 + rng.below(19);
    const auto p = sample_dirichlet(n, i % 2 ? 0.3 : 1.0, rng);
    const ActionDistribution q(std::vector<double>(p.probs().begin(), p.probs().end()));
    for (int d = 0; d < 1000; ++d) {
      const auto s = DrawState::random(n, rng);
      mismatches += sample_stable(p, s) != sample_stable(q, s);
    }
  }
  return {mismatches == 0, std::to_string(mismatches) + " mismatches over 10^6 shared draws"};
}

Outcome p4_interp() {
  InterpStudyConfig c;
  c.seed = 4;
  c.threads = worker_count();
  std::map<std::string, double> mean;
  for (const auto& r : run_interp_study(c)) mean[r.setting + "/" + r.mode] += r.mean_changes / static_cast<double>(c.pairs);
  bool ok = true;
  std::string detail;
  for (const char* s : {"0.2", "uniform", "5"}) {
    const double st = mean[std::string(s) + "/stable"];
    const double nv = mean[std::string(s) + "/naive"];
    ok = ok && st <= 1.5 && nv > 8.0;
    detail += std::string(s) + ": stable " + fmt("%.3f", st) + " naive " + fmt("%.3f", nv) + "; ";
  }
  ok = ok && mean["5/stable"] < mean["0.2/stable"] && mean["5/naive"] > mean["0.2/naive"];
  return {ok, detail};
}

Outcome p5_schedules() {
  const std::vector<double> golden{0, 0, 0, 0, 0.625, 0.125, 0, 0, 1, 0.75, 0.25, 0, 1, 1, 0.875, 0.375, 1, 1, 1, 1};
  const auto k = horizon_schedule({4, 4, 2, ScheduleKind::Horizon});
  double golden_err = 0.0;
  for (std::size_t r = 0; r < 5; ++r) {
    for (std::size_t c = 0; c < 4; ++c) golden_err = std::max(golden_err, std::abs(k(r, c) - golden[r * 4 + c]));
  }
  bool stair = true;
  for (std::size_t h : {1u, 2u, 4u, 8u, 16u, 32u}) {
    const auto s = horizon_schedule({h, h, 1, ScheduleKind::Horizon});
    for (std::size_t r = 0; r <= h; ++r) {
      for (std::size_t c = 0; c < h; ++c) stair = stair && s(r, c) == (r > c ? 1.0 : 0.0);
    }
  }
  std::size_t invalid = 0;
  std::size_t checked = 0;
  for (std::size_t h : {1u, 2u, 4u, 8u, 32u}) {
    for (std::size_t b = 1; b <= 4 * h; ++b) {
      for (double nu : {1.0, 2.0, 4.0, 8.0, std::min(16.0, static_cast<double>(h))}) {
        if (nu > static_cast<double>(h)) continue;
        ++checked;
        invalid += validate(horizon_schedule({h, b, nu, ScheduleKind::Horizon})).has_value();
      }
    }
  }
  bool sub_frame = true;
  for (std::size_t h : {4u, 8u, 32u}) {
    try {
      (void)make_schedule({h, h / 2, 4.0 > static_cast<double>(h) ? 1.0 : 4.0, ScheduleKind::Horizon});
    } catch (const std::exception&) {
      sub_frame = false;
    }
    try {
      (void)make_schedule({h, h / 2, 1.0, ScheduleKind::Pyramidal});
      sub_frame = false;
    } catch (const std::invalid_argument&) {
    }
  }
  const bool ok = golden_err <= 1e-12 && stair && invalid == 0 && sub_frame;
  return {ok, "golden max err " + fmt("%.1e", golden_err) + ", staircase " + (stair ? "exact" : "WRONG") + ", " +
                  std::to_string(invalid) + " invalid of " + std::to_string(checked) + " grid schedules, sub-frame " +
                  (sub_frame ? "ok" : "WRONG")};
}

Outcome p6_autoregressive() {
  const AgentConfig defaults;
  std::size_t mismatches = 0;
  std::size_t rollouts = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng init = Rng(600 + seed).fork(Stream::Init);
    AgentModels m = AgentModels::init(defaults, init);
    hilab::testing::sharpen(m.policy);
    Rng ctx_rng = Rng(600 + seed).fork(Stream::Replay);
    std::vector<LatentTrajectory> contexts;
    for (int i = 0; i < 5; ++i) contexts.push_back(hilab::testing::random_trajectory(1, kObsDim, kNumActions, ctx_rng));
    const std::size_t h = defaults.schedule.horizon;
    const ImaginationConfig cfg{{h, h, 1.0, ScheduleKind::Horizon}, 1, SamplingMode::Stable, false};
    const Rng stream = Rng(600 + seed).fork(Stream::Imagination);
    const auto out = horizon_imagine(m.denoiser, m.policy, m.reward_term, cfg, contexts, stream);
    for (std::size_t r = 0; r < contexts.size(); ++r) {
      Rng rr = stream.fork(r);
      const auto noise = sample_rollout_noise(h, kObsDim, kNumActions, rr);
      const auto ar =
          hilab::testing::autoregressive_rollout(m.denoiser, m.policy, m.reward_term, contexts[r], h, noise.latents);
      const auto& t = out[r].trajectory;
      mismatches += ar.latents != t.latents || ar.actions != t.actions || ar.rewards != t.rewards || ar.terms != t.terms;
      ++rollouts;
    }
  }
  return {mismatches == 0 && rollouts == 50,
          std::to_string(mismatches) + " of " + std::to_string(rollouts) + " rollouts differ from the sequential oracle"};
}

Outcome p7_gradients() {
  using hilab::testing::max_relative_fd_error;
  using hilab::testing::random_trajectory;
  Rng rng = Rng(7).fork(Stream::Study);
  double worst[4] = {0, 0, 0, 0};
  for (int i = 0; i < 20; ++i) {
    const NetDims dims{1 + rng.below(3), 2 + rng.below(3), 1 + rng.below(4), 3 + rng.below(6)};
    std::vector<LatentTrajectory> segs;
    for (int s = 0; s < 2; ++s) segs.push_back(random_trajectory(2 + rng.below(3), dims.latent_dim, dims.num_actions, rng));
    std::vector<FrameRef> refs;
    for (const auto& s : segs) {
      for (std::size_t t = 0; t < s.frames(); ++t) refs.push_back({&s, t});
    }

    Denoiser den(dims, rng);
    const auto batch = TrainBatch::from_segments(segs, rng);
    const auto g0 = rf_loss(den, batch);
    worst[0] = std::max(worst[0], max_relative_fd_error(den.net().params(), g0.grads, [&] { return rf_loss(den, batch).loss; }));

    PolicyModel pol(dims, rng);
    std::vector<ActorSample> samples;
    for (auto ref : refs) samples.push_back({ref, rng.below(dims.num_actions), rng.uniform(-1, 1)});
    const auto g1 = actor_loss(pol, samples, 1e-3);
    worst[1] = std::max(worst[1], max_relative_fd_error(pol.net().params(), g1.grads,
                                                        [&] { return actor_loss(pol, samples, 1e-3).loss; }));

    CriticModel critic(dims, rng);
    std::vector<double> returns;
    for (std::size_t r = 0; r < refs.size(); ++r) returns.push_back(rng.uniform(-3, 3));
    const auto g2 = critic_loss(critic, refs, returns);
    worst[2] = std::max(worst[2], max_relative_fd_error(critic.net().params(), g2.grads,
                                                        [&] { return critic_loss(critic, refs, returns).loss; }));

    RewardTermModel rt(dims, rng);
    const auto g3 = reward_term_loss(rt, segs);
    worst[3] = std::max(worst[3],
                        max_relative_fd_error(rt.net().params(), g3.grads, [&] { return reward_term_loss(rt, segs).loss; }));
  }
  const bool ok = *std::max_element(worst, worst + 4) < 1e-4;
  return {ok, "max relative error: denoiser " + fmt("%.2e", worst[0]) + ", policy " + fmt("%.2e", worst[1]) +
                  ", critic " + fmt("%.2e", worst[2]) + ", reward-term " + fmt("%.2e", worst[3])};
}

Outcome p8_lambda_returns() {
  Rng rng = Rng(8).fork(Stream::Study);
  std::size_t mismatches = 0;
  std::size_t terminated = 0;
  std::size_t truncated = 0;
  for (int i = 0; i < 1000; ++i) {
    const std::size_t n = 1 + rng.below(16);
    std::vector<double> r(n);
    std::vector<double> v(n);
    std::vector<std::uint8_t> d(n);
    std::vector<std::uint8_t> tr(n);
    for (std::size_t t = 0; t < n; ++t) {
      r[t] = rng.bernoulli(0.5) ? rng.uniform(-5, 5) : 0.0;
      v[t] = rng.uniform(-4, 4);
      d[t] = rng.bernoulli(0.1);
      tr[t] = !d[t] && rng.bernoulli(0.1);
      terminated += d[t];
      truncated += tr[t];
    }
    const double gamma = i % 3 == 0 ? 0.99 : rng.uniform(0.0, 1.0);
    const double lambda = i % 3 == 0 ? 0.95 : rng.uniform(0.0, 1.0);
    const auto g = lambda_returns(r, d, v, gamma, lambda, tr);
    for (std::size_t t = 0; t < n; ++t) {
      mismatches += g[t] != hilab::testing::recursive_return(r, d, v, tr, gamma, lambda, t);
    }
  }
  return {mismatches == 0 && terminated > 0 && truncated > 0,
          std::to_string(mismatches) + " mismatching entries; " + std::to_string(terminated) + " terminated and " +
              std::to_string(truncated) + " truncated steps covered"};
}

Outcome p9_fidelity(const fs::path& work) {
  AgentConfig cfg;
  cfg.seed = 9;
  const fs::path dir = work / "p9";
  fs::remove_all(dir);
  const auto t0 = std::chrono::steady_clock::now();
  const TrainingResult res = run_training(cfg, dir);
  const double train_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const AgentModels models = load_agent_checkpoint(res.model_path);
  const ReplayBuffer replay = ReplayBuffer::read_csv(dir / "replay.csv");
  GenQualityConfig gq;
  gq.nus = {1, 4};
  gq.budgets = {16, 32};
  gq.seed = 9;
  gq.threads = worker_count();
  double sub = NAN;
  double anchor = NAN;
  for (const auto& row : run_gen_quality(models.denoiser, replay, gq)) {
    if (row.nu == 4.0 && row.budget == 16) sub = row.mse;
    if (row.nu == 1.0 && row.budget == 32) anchor = row.mse;
  }
  const bool ok = std::isfinite(sub) && std::isfinite(anchor) && sub <= 2.0 * anchor && train_s < 600.0;
  return {ok, "mse(nu=4,B=16) " + fmt("%.5g", sub) + " vs 2 x mse(nu=1,B=32) " + fmt("%.5g", 2.0 * anchor) +
                  "; training took " + fmt("%.0f", train_s) + " s"};
}

Outcome p10_control(const fs::path& work) {
  struct Arm {
    const char* name;
    std::size_t budget;
    double nu;
    SamplingMode mode;
  };
  const Arm arms[] = {{"stable_nu4_B16", 16, 4, SamplingMode::Stable},
                      {"stable_nu1_B32", 32, 1, SamplingMode::Stable},
                      {"naive_nu4_B16", 16, 4, SamplingMode::Naive}};
  const auto t0 = std::chrono::steady_clock::now();
  std::map<std::string, double> med;
  std::string detail;
  for (const Arm& arm : arms) {
    TrainCommandConfig tc;
    tc.agent.schedule.budget = arm.budget;
    tc.agent.schedule.decay_horizon = arm.nu;
    tc.agent.mode = arm.mode;
    tc.agent.seed = 100;
    tc.seeds = 5;
    tc.threads = worker_count();
    const fs::path dir = work / "p10" / arm.name;
    fs::remove_all(dir);
    std::vector<double> finals;
    for (const auto& s : run_train_command(tc, dir)) finals.push_back(s.result.final_return);
    med[arm.name] = median(finals);
    detail += std::string(arm.name) + " [";
    for (std::size_t i = 0; i < finals.size(); ++i) detail += (i ? " " : "") + fmt("%.4f", finals[i]);
    detail += "] median " + fmt("%.4f", med[arm.name]) + "; ";
  }
  const double minutes = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() / 60.0;
  const double sub = med["stable_nu4_B16"];
  const double anchor = med["stable_nu1_B32"];
  const double naive = med["naive_nu4_B16"];
  const bool ok = std::abs(sub - anchor) <= 0.1 * std::abs(anchor) && sub > naive && minutes < 60.0;
  return {ok, detail + "took " + fmt("%.1f", minutes) + " min"};
}

#ifndef HILAB_CLI_PATH
#define HILAB_CLI_PATH "hilab"
#endif

Outcome p11_determinism(const fs::path& work) {
  const fs::path dir = work / "p11";
  fs::remove_all(dir);
  fs::create_directories(dir);
  const std::string cli = HILAB_CLI_PATH;
  const std::string train_args =
      " train --seeds 2 --epochs 3 --set train.collect_steps=40 --set train.wm_steps=4 --set train.ac_steps=3"
      " --set train.wm_warmup=1 --set train.ac_warmup=2 --set train.wm_hidden=16 --set train.ac_hidden=16"
      " --set schedule.horizon=8 --set schedule.budget=4 --set schedule.nu=2 --set train.wm_segment=8"
      " --set train.imagination_batch=4 --set train.eval_episodes=2 --set train.final_eval_episodes=4"
      " --dump-trace {out}/trace.csv";
  struct Cmd {
    std::string name;
    std::string args;
    bool directory;
  };
  const std::vector<Cmd> cmds{
      {"pairs", " pairs-study --n 4,7 --pairs 25 --draws 800 --control", false},
      {"interp", " interp-study --pairs 4 --sims 300", false},
      {"schedule", " schedule-dump --horizon 8 --budget 5 --nu 3", false},
      {"train", train_args, true},
  };
  // "{out}" in the arguments expands to the run's output path.
  auto run = [&](std::string args, const fs::path& out, std::size_t threads) {
    for (auto pos = args.find("{out}"); pos != std::string::npos; pos = args.find("{out}")) {
      args.replace(pos, 5, "\"" + out.string() + "\"");
    }
    const std::string cmd = "\"" + cli + "\" --seed 11 --threads " + std::to_string(threads) + " --out \"" +
                            out.string() + "\"" + args + " > \"" + (dir / "log.txt").string() + "\" 2>&1";
    return std::system(cmd.c_str()) == 0;
  };
  std::size_t compared = 0;
  std::vector<std::string> failures;
  auto compare = [&](const fs::path& a, const fs::path& b, const std::string& label) {
    ++compared;
    if (!fs::exists(a) || !fs::exists(b) || csv_body(a) != csv_body(b) || csv_body(a).empty()) failures.push_back(label);
  };
  for (const Cmd& c : cmds) {
    const fs::path a = dir / (c.name + "_a" + (c.directory ? "" : ".csv"));
    const fs::path b = dir / (c.name + "_b" + (c.directory ? "" : ".csv"));
    if (!run(c.args, a, 1) || !run(c.args, b, 2)) {
      failures.push_back(c.name + " (exit status)");
      continue;
    }
    if (!c.directory) {
      compare(a, b, c.name);
      continue;
    }
    for (const auto& e : fs::recursive_directory_iterator(a)) {
      if (e.path().extension() != ".csv") continue;
      compare(e.path(), b / fs::relative(e.path(), a), c.name + "/" + fs::relative(e.path(), a).string());
    }
  }
  const fs::path model = dir / "train_a" / "seed_0" / "model.hilm";
  const fs::path replay = dir / "train_a" / "seed_0" / "replay.csv";
  const std::string gq = " gen-quality --checkpoint \"" + model.string() + "\" --replay \"" + replay.string() +
                         "\" --horizon 8 --segments 24 --nu 1,2,4 --budget 4,8";
  if (run(gq, dir / "gq_a.csv", 1) && run(gq, dir / "gq_b.csv", 2)) {
    compare(dir / "gq_a.csv", dir / "gq_b.csv", "gen-quality");
  } else {
    failures.push_back("gen-quality (exit status)");
  }
  std::string detail = std::to_string(compared) + " CSV bodies compared across reruns";
  for (const auto& f : failures) detail += "; differs: " + f;
  return {failures.empty() && compared >= 5, detail};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"hilab acceptance checks"};
  std::vector<std::string> selected;
  std::string work = "acceptance_work";
  app.add_option("--criterion", selected, "Criteria to run (P1..P11); default all")->delimiter(',');
  app.add_option("--work-dir", work, "Scratch directory for training runs")->capture_default_str();
  CLI11_PARSE(app, argc, argv);

  const fs::path wd(work);
  const std::vector<std::pair<std::string, std::function<Outcome()>>> all{
      {"P1", p1_marginals},
      {"P2", p2_sandwich},
      {"P3", p3_zero_change},
      {"P4", p4_interp},
      {"P5", p5_schedules},
      {"P6", p6_autoregressive},
      {"P7", p7_gradients},
      {"P8", p8_lambda_returns},
      {"P9", [&] { return p9_fidelity(wd); }},
      {"P10", [&] { return p10_control(wd); }},
      {"P11", [&] { return p11_determinism(wd); }},
  };
  for (const auto& s : selected) {
    if (std::none_of(all.begin(), all.end(), [&](const auto& c) { return c.first == s; })) {
      std::fprintf(stderr, "unknown criterion %s\n", s.c_str());
      return 2;
    }
  }
  bool ok = true;
  for (const auto& [name, fn] : all) {
    if (!selected.empty() && std::find(selected.begin(), selected.end(), name) == selected.end()) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("%s %s (%.1f s): %s\n", name.c_str(), o.pass ? "PASS" : "FAIL", secs, o.detail.c_str());
    std::fflush(stdout);
    ok = ok && o.pass;
  }
  return ok ? 0 : 1;
}
