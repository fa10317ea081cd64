#include "hilab/imagination.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>
#include <string>

#include "hilab/symlog.hpp"

namespace hilab {

SamplingMode parse_sampling_mode(const std::string& s) {
  if (s == "stable") return SamplingMode::Stable;
  if (s == "naive") return SamplingMode::Naive;
  throw std::invalid_argument("unknown sampling mode '" + s + "' (expected stable|naive)");
}

std::string to_string(SamplingMode mode) { return mode == SamplingMode::Stable ? "stable" : "naive"; }

void ImaginationConfig::check() const { schedule.check(); }

RolloutNoise sample_rollout_noise(std::size_t horizon, std::size_t latent_dim, std::size_t num_actions,
                                  Rng& rng) {
  RolloutNoise n{{}, {}, rng.fork(1), rng.fork(2)};
  n.latents.resize(horizon * latent_dim);
  for (double& v : n.latents) v = rng.uniform(-1.0, 1.0);
  if (horizon > 1) n.draws.reserve(horizon - 1);
  for (std::size_t i = 0; i + 1 < horizon; ++i) n.draws.push_back(DrawState::random(num_actions, rng));
  return n;
}

namespace {

ScheduleMatrix checked_schedule(const ScheduleSpec& spec) {
  spec.check();
  ScheduleMatrix k = make_schedule(spec);
  if (auto v = validate(k)) throw std::invalid_argument("invalid schedule: " + v->message);
  return k;
}

LatentTrajectory start_trajectory(const LatentTrajectory& context, std::size_t horizon,
                                  std::span<const double> noise) {
  context.check();
  const std::size_t k = context.frames();
  const std::size_t d = context.dim;
  if (noise.size() != horizon * d) throw std::invalid_argument("imagination: noise has wrong size");
  LatentTrajectory t;
  t.dim = d;
  t.latents = context.latents;
  t.latents.insert(t.latents.end(), noise.begin(), noise.end());
  t.actions = context.actions;
  t.actions.resize(k + horizon - 1, kNoAction);
  t.taus.assign(k + horizon, 0.0);
  std::fill(t.taus.begin(), t.taus.begin() + static_cast<std::ptrdiff_t>(k), 1.0);
  t.rewards = context.rewards;
  t.rewards.resize(k + horizon, 0.0);
  t.terms = context.terms;
  t.terms.resize(k + horizon, 0);
  t.mask.assign(k + horizon, 1);
  return t;
}

// One Euler step of the schedule on every trajectory. All velocities come
// from a single batched pass. Returns false if no frame moved.
bool denoise_step(const Denoiser& denoiser, const ScheduleMatrix& sched, std::size_t b, std::size_t context,
                  std::span<LatentTrajectory* const> trajs) {
  const std::vector<double> dtau = sched.time_deltas(b);
  const std::size_t h = sched.horizon();
  std::vector<FrameRef> refs;
  for (const LatentTrajectory* t : trajs) {
    for (std::size_t c = 0; c < h; ++c) {
      if (dtau[c] > 0.0) refs.push_back({t, context + c});
    }
  }
  if (refs.empty()) return false;
  const Matrix v = denoiser.velocities(refs);
  const std::size_t d = denoiser.dims().latent_dim;
  std::size_t row = 0;
  for (LatentTrajectory* t : trajs) {
    for (std::size_t c = 0; c < h; ++c) {
      const std::size_t f = context + c;
      const double next_tau = sched(b + 1, c);
      if (dtau[c] > 0.0) {
        auto z = t->frame(f);
        for (std::size_t j = 0; j < d; ++j) {
          z[j] += v(row, j) * dtau[c];
          if (!std::isfinite(z[j])) {
            throw std::runtime_error("imagination: non-finite latent at denoising step " + std::to_string(b));
          }
        }
        if (next_tau == 1.0) {
          for (double& x : z) x = std::clamp(x, -1.0, 1.0);
        }
        ++row;
      }
      t->taus[f] = next_tau;
    }
  }
  return true;
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

std::vector<ImaginedRollout> horizon_imagine(const Denoiser& denoiser, const PolicyModel& policy,
                                             const RewardTermModel& reward_term, const ImaginationConfig& config,
                                             std::span<const LatentTrajectory> contexts, const Rng& rng) {
  config.check();
  const ScheduleMatrix sched = checked_schedule(config.schedule);
  const std::size_t h = sched.horizon();
  const std::size_t budget = sched.budget();
  const std::size_t k = config.context;
  const std::size_t d = denoiser.dims().latent_dim;
  const std::size_t n_act = denoiser.dims().num_actions;
  if (policy.dims().num_actions != n_act || policy.dims().latent_dim != d || reward_term.dims().latent_dim != d) {
    throw std::invalid_argument("horizon_imagine: model dimensions disagree");
  }

  std::vector<ImaginedRollout> out(contexts.size());
  std::vector<RolloutNoise> noise;
  noise.reserve(contexts.size());
  std::vector<LatentTrajectory*> trajs;
  for (std::size_t r = 0; r < contexts.size(); ++r) {
    if (contexts[r].frames() != k || contexts[r].dim != d) {
      throw std::invalid_argument("horizon_imagine: context " + std::to_string(r) + " does not have " +
                                  std::to_string(k) + " frames of dim " + std::to_string(d));
    }
    Rng rr = rng.fork(r);
    noise.push_back(sample_rollout_noise(h, d, n_act, rr));
    out[r].context = k;
    out[r].trajectory = start_trajectory(contexts[r], h, noise[r].latents);
    out[r].steps.resize(budget);
    out[r].action_trace.assign(budget, std::vector<int>(h > 0 ? h - 1 : 0, kNoAction));
    trajs.push_back(&out[r].trajectory);
  }

  if (k > 0 && !out.empty()) {
    std::vector<FrameRef> refs;
    for (const auto& ro : out) refs.push_back({&ro.trajectory, k - 1});
    const auto dists = policy.distributions(refs);
    for (std::size_t r = 0; r < out.size(); ++r) {
      out[r].trajectory.actions[k - 1] = static_cast<int>(sample_naive(dists[r], noise[r].first_action));
    }
  }

  for (std::size_t b = 0; b < budget; ++b) {
    const std::vector<double> dtau = sched.time_deltas(b);
    std::vector<std::size_t> slots;
    for (std::size_t i = 0; i + 1 < h; ++i) {
      const bool active = config.query_all_slots ? sched(b, i + 1) < 1.0 : dtau[i + 1] > 0.0;
      if (active) slots.push_back(i);
    }
    std::vector<FrameRef> refs;
    refs.reserve(slots.size() * out.size());
    for (auto& ro : out) {
      ro.steps[b].snapshot = ro.trajectory;
      for (std::size_t i : slots) refs.push_back({&ro.steps[b].snapshot, k + i});
    }
    if (!refs.empty()) {
      const auto dists = policy.distributions(refs);
      std::size_t row = 0;
      for (std::size_t r = 0; r < out.size(); ++r) {
        auto& ro = out[r];
        for (std::size_t i : slots) {
          const ActionDistribution& p = dists[row++];
          std::size_t a = 0;
          if (config.mode == SamplingMode::Stable) {
            a = sample_stable(p, noise[r].draws[i]);
          } else {
            Rng fresh = noise[r].naive.fork(b * h + i);
            a = sample_naive(p, fresh);
          }
          ro.trajectory.actions[k + i] = static_cast<int>(a);
          ro.steps[b].queries.push_back({i, p, a});
        }
      }
    }
    for (auto& ro : out) {
      for (std::size_t i = 0; i + 1 < h; ++i) ro.action_trace[b][i] = ro.trajectory.actions[k + i];
    }
    if (denoise_step(denoiser, sched, b, k, trajs)) {
      for (auto& ro : out) ++ro.denoiser_passes;
    }
  }

  if (!out.empty() && h > 0) {
    std::vector<FrameRef> refs;
    for (const auto& ro : out) {
      for (std::size_t c = 0; c < h; ++c) refs.push_back({&ro.trajectory, k + c});
    }
    const Matrix pred = reward_term.predict(refs);
    std::size_t row = 0;
    for (auto& ro : out) {
      ro.term_probs.assign(k + h, 0.0);
      for (std::size_t c = 0; c < h; ++c, ++row) {
        const std::size_t f = k + c;
        ro.trajectory.rewards[f] = symexp(pred(row, 0));
        ro.term_probs[f] = sigmoid(pred(row, 1));
        ro.trajectory.terms[f] = ro.term_probs[f] > 0.5 ? 1 : 0;
      }
    }
  }
  return out;
}

LatentTrajectory generate_with_actions(const Denoiser& denoiser, const ScheduleSpec& spec,
                                       const LatentTrajectory& context, std::span<const int> actions,
                                       std::span<const double> noise) {
  const ScheduleMatrix sched = checked_schedule(spec);
  const std::size_t k = context.frames();
  const std::size_t h = sched.horizon();
  if (actions.size() != k + h - 1) throw std::invalid_argument("generate_with_actions: wrong number of actions");
  LatentTrajectory t = start_trajectory(context, h, noise);
  std::copy(actions.begin(), actions.end(), t.actions.begin());
  LatentTrajectory* const ptr[] = {&t};
  for (std::size_t b = 0; b < sched.budget(); ++b) denoise_step(denoiser, sched, b, k, ptr);
  return t;
}

std::size_t count_changes(std::span<const int> seq) {
  std::size_t n = 0;
  for (std::size_t b = 1; b < seq.size(); ++b) {
    if (seq[b] != seq[b - 1] && seq[b] != kNoAction && seq[b - 1] != kNoAction) ++n;
  }
  return n;
}

std::vector<std::size_t> count_action_changes(const ImaginedRollout& rollout) {
  const std::size_t slots = rollout.action_trace.empty() ? 0 : rollout.action_trace.front().size();
  std::vector<std::size_t> out(slots, 0);
  std::vector<int> seq(rollout.action_trace.size());
  for (std::size_t i = 0; i < slots; ++i) {
    for (std::size_t b = 0; b < seq.size(); ++b) seq[b] = rollout.action_trace[b][i];
    out[i] = count_changes(seq);
  }
  return out;
}

void write_trace_csv(std::ostream& out, const ImaginedRollout& rollout) {
  out << "b,t,tau,action,change_flag\n";
  for (std::size_t b = 0; b < rollout.action_trace.size(); ++b) {
    const auto& row = rollout.action_trace[b];
    for (std::size_t i = 0; i < row.size(); ++i) {
      const int prev = b > 0 ? rollout.action_trace[b - 1][i] : kNoAction;
      const bool changed = prev != kNoAction && row[i] != kNoAction && prev != row[i];
      char tau[32];
      std::snprintf(tau, sizeof tau, "%.9g", rollout.steps[b].snapshot.taus[rollout.context + i]);
      out << b << ',' << i << ',' << tau << ',' << row[i] << ',' << (changed ? 1 : 0) << '\n';
    }
  }
}

}  // namespace hilab
