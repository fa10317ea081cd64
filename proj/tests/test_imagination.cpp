#include <doctest.h>

#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "hilab/imagination.hpp"
#include "support/oracles.hpp"
#include "support/traj.hpp"

using namespace hilab;
using hilab::testing::random_trajectory;

namespace {

struct Models {
  Denoiser denoiser;
  PolicyModel policy;
  RewardTermModel reward_term;
};

Models make_models(std::uint64_t seed, std::size_t actions = 3) {
  Rng rng(seed);
  const NetDims dims{2, actions, 4, 16};
  Denoiser den(dims, rng);
  PolicyModel pol(dims, rng);
  RewardTermModel rt(dims, rng);
  return {std::move(den), std::move(pol), std::move(rt)};
}

// Every logit equals `logits` regardless of the input.
void fix_policy(PolicyModel& policy, const std::vector<double>& logits) {
  auto& tensors = policy.net().params().tensors();
  for (auto& t : tensors) {
    for (double& v : t.values) v = 0.0;
  }
  tensors.back().values = logits;
}

std::vector<LatentTrajectory> contexts(std::size_t n, std::size_t k, Rng& rng) {
  std::vector<LatentTrajectory> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(random_trajectory(k, 2, 3, rng));
  return out;
}

ImaginationConfig config(std::size_t h, std::size_t b, double nu, SamplingMode mode = SamplingMode::Stable) {
  ImaginationConfig c;
  c.schedule = {h, b, nu, ScheduleKind::Horizon};
  c.mode = mode;
  return c;
}

std::size_t total_changes(const std::vector<ImaginedRollout>& rollouts) {
  std::size_t n = 0;
  for (const auto& r : rollouts) {
    for (auto c : count_action_changes(r)) n += c;
  }
  return n;
}

}  // namespace

TEST_CASE("imagination is deterministic for a fixed stream") {
  const auto m = make_models(1);
  Rng rng(2);
  const auto ctx = contexts(3, 1, rng);
  for (auto mode : {SamplingMode::Stable, SamplingMode::Naive}) {
    const auto a = horizon_imagine(m.denoiser, m.policy, m.reward_term, config(8, 5, 2, mode), ctx, Rng(9));
    const auto b = horizon_imagine(m.denoiser, m.policy, m.reward_term, config(8, 5, 2, mode), ctx, Rng(9));
    for (std::size_t r = 0; r < 3; ++r) {
      CHECK(a[r].trajectory.latents == b[r].trajectory.latents);
      CHECK(a[r].trajectory.actions == b[r].trajectory.actions);
      CHECK(a[r].action_trace == b[r].action_trace);
    }
  }
}

TEST_CASE("rollouts do not depend on batch composition") {
  const auto m = make_models(3);
  Rng rng(4);
  const auto ctx = contexts(4, 2, rng);
  auto cfg = config(6, 4, 3);
  cfg.context = 2;
  const auto all = horizon_imagine(m.denoiser, m.policy, m.reward_term, cfg, ctx, Rng(5));
  const auto two = horizon_imagine(m.denoiser, m.policy, m.reward_term, cfg, std::span(ctx).first(2), Rng(5));
  for (std::size_t r = 0; r < 2; ++r) CHECK(all[r].trajectory.latents == two[r].trajectory.latents);
}

TEST_CASE("schedule bookkeeping") {
  const auto m = make_models(6);
  Rng rng(7);
  const auto ctx = contexts(2, 1, rng);
  for (std::size_t budget : {1u, 3u, 8u, 13u}) {
    const auto cfg = config(8, budget, 4);
    const auto out = horizon_imagine(m.denoiser, m.policy, m.reward_term, cfg, ctx, Rng(1));
    for (const auto& ro : out) {
      CHECK(ro.denoiser_passes == budget);
      CHECK(ro.steps.size() == budget);
      CHECK(ro.horizon() == 8);
      for (std::size_t f = 0; f < ro.trajectory.frames(); ++f) CHECK(ro.trajectory.taus[f] == 1.0);
      for (std::size_t b = 1; b < budget; ++b) {
        for (std::size_t f = 0; f < ro.trajectory.frames(); ++f) {
          CHECK(ro.steps[b].snapshot.taus[f] >= ro.steps[b - 1].snapshot.taus[f]);
        }
      }
      for (double z : ro.trajectory.latents) {
        CHECK(z >= -1.0);
        CHECK(z <= 1.0);
      }
      for (int a : ro.trajectory.actions) {
        CHECK(a >= 0);
        CHECK(a < 3);
      }
      CHECK(ro.trajectory.latents.size() == 9 * 2);
      CHECK(ro.term_probs.size() == 9);
    }
  }
}

TEST_CASE("a state-independent policy never changes its stable action") {
  auto m = make_models(8);
  fix_policy(m.policy, {0.3, -0.2, 0.1});
  Rng rng(9);
  const auto ctx = contexts(20, 1, rng);
  auto cfg = config(8, 12, 4);
  cfg.query_all_slots = true;
  CHECK(total_changes(horizon_imagine(m.denoiser, m.policy, m.reward_term, cfg, ctx, Rng(3))) == 0);
}

TEST_CASE("querying every slot leaves stable rollouts unchanged") {
  const auto m = make_models(10);
  Rng rng(11);
  const auto ctx = contexts(6, 1, rng);
  auto minimal = config(8, 6, 4);
  auto full = minimal;
  full.query_all_slots = true;
  const auto a = horizon_imagine(m.denoiser, m.policy, m.reward_term, minimal, ctx, Rng(4));
  const auto b = horizon_imagine(m.denoiser, m.policy, m.reward_term, full, ctx, Rng(4));
  for (std::size_t r = 0; r < a.size(); ++r) {
    CHECK(a[r].trajectory.latents == b[r].trajectory.latents);
    CHECK(a[r].trajectory.actions == b[r].trajectory.actions);
    std::size_t qa = 0;
    std::size_t qb = 0;
    for (const auto& s : a[r].steps) qa += s.queries.size();
    for (const auto& s : b[r].steps) qb += s.queries.size();
    CHECK(qa < qb);
  }
}

TEST_CASE("change counting") {
  const std::vector<int> seq{1, 1, 2, 2, 1};
  CHECK(count_changes(seq) == 2);
  const std::vector<int> gaps{kNoAction, kNoAction, 0, 0, 2};
  CHECK(count_changes(gaps) == 1);
  CHECK(count_changes(std::vector<int>{}) == 0);
}

TEST_CASE("naive sampling under a uniform policy changes 9 times in 10") {
  auto m = make_models(12, 10);
  fix_policy(m.policy, std::vector<double>(10, 0.0));
  Rng rng(13);
  std::vector<LatentTrajectory> ctx;
  for (int i = 0; i < 200; ++i) ctx.push_back(random_trajectory(1, 2, 10, rng));
  auto cfg = config(6, 12, 6, SamplingMode::Naive);
  cfg.query_all_slots = true;
  const auto out = horizon_imagine(m.denoiser, m.policy, m.reward_term, cfg, ctx, Rng(5));
  double expected = 0.0;
  for (const auto& ro : out) {
    std::vector<std::size_t> queries(5, 0);
    for (const auto& s : ro.steps) {
      for (const auto& q : s.queries) ++queries[q.slot];
    }
    for (auto q : queries) expected += 0.9 * static_cast<double>(q > 0 ? q - 1 : 0);
  }
  const double got = static_cast<double>(total_changes(out));
  CHECK(std::abs(got - expected) < 4 * std::sqrt(expected * 0.1));

  cfg.mode = SamplingMode::Stable;
  CHECK(total_changes(horizon_imagine(m.denoiser, m.policy, m.reward_term, cfg, ctx, Rng(5))) == 0);
}

TEST_CASE("stable actions keep the policy marginal") {
  auto m = make_models(14);
  const std::vector<double> logits{0.0, std::log(2.0), std::log(5.0)};
  fix_policy(m.policy, logits);
  Rng rng(15);
  const auto ctx = contexts(4000, 1, rng);
  const auto out = horizon_imagine(m.denoiser, m.policy, m.reward_term, config(4, 2, 2), ctx, Rng(6));
  std::vector<double> counts(3, 0.0);
  double total = 0.0;
  for (const auto& ro : out) {
    for (std::size_t i = 1; i < ro.trajectory.actions.size(); ++i) {
      counts[static_cast<std::size_t>(ro.trajectory.actions[i])] += 1.0;
      total += 1.0;
    }
  }
  const std::vector<double> p{0.125, 0.25, 0.625};
  for (std::size_t a = 0; a < 3; ++a) {
    CHECK(std::abs(counts[a] / total - p[a]) < 4 * std::sqrt(p[a] * (1 - p[a]) / total));
  }
}

TEST_CASE("stable sampling changes fewer actions than naive sampling") {
  const auto m = make_models(16);
  Rng rng(17);
  const auto ctx = contexts(50, 1, rng);
  auto cfg = config(8, 16, 8);
  cfg.query_all_slots = true;
  const auto stable = total_changes(horizon_imagine(m.denoiser, m.policy, m.reward_term, cfg, ctx, Rng(7)));
  cfg.mode = SamplingMode::Naive;
  const auto naive = total_changes(horizon_imagine(m.denoiser, m.policy, m.reward_term, cfg, ctx, Rng(7)));
  CHECK(stable < naive);
}

TEST_CASE("imagination errors") {
  auto m = make_models(18);
  Rng rng(19);
  const auto ctx = contexts(2, 1, rng);
  auto cfg = config(8, 4, 2);
  cfg.context = 2;
  CHECK_THROWS_AS(horizon_imagine(m.denoiser, m.policy, m.reward_term, cfg, ctx, Rng(1)), std::invalid_argument);
  CHECK_THROWS_AS(horizon_imagine(m.denoiser, m.policy, m.reward_term, config(8, 4, 9), ctx, Rng(1)),
                  std::invalid_argument);
  CHECK_THROWS_AS(parse_sampling_mode("greedy"), std::invalid_argument);

  const auto other = make_models(20, 4);
  CHECK_THROWS_AS(horizon_imagine(m.denoiser, other.policy, m.reward_term, config(8, 4, 2), ctx, Rng(1)),
                  std::invalid_argument);

  m.denoiser.net().params().tensors().back().values[0] = std::numeric_limits<double>::quiet_NaN();
  try {
    (void)horizon_imagine(m.denoiser, m.policy, m.reward_term, config(8, 4, 2), ctx, Rng(1));
    FAIL("expected a runtime_error");
  } catch (const std::runtime_error& e) {
    CHECK(std::string(e.what()).find("step 0") != std::string::npos);
  }
}

TEST_CASE("one-frame-per-step imagination equals a sequential rollout") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    auto m = make_models(100 + seed);
    hilab::testing::sharpen(m.policy);
    Rng rng(200 + seed);
    const auto ctx = contexts(3, 1, rng);
    const Rng stream(300 + seed);
    const auto out = horizon_imagine(m.denoiser, m.policy, m.reward_term, config(8, 8, 1), ctx, stream);
    for (std::size_t r = 0; r < ctx.size(); ++r) {
      Rng rr = stream.fork(r);
      const auto noise = sample_rollout_noise(8, 2, 3, rr);
      const auto ar =
          hilab::testing::autoregressive_rollout(m.denoiser, m.policy, m.reward_term, ctx[r], 8, noise.latents);
      CHECK(ar.latents == out[r].trajectory.latents);
      CHECK(ar.actions == out[r].trajectory.actions);
      CHECK(ar.rewards == out[r].trajectory.rewards);
      CHECK(ar.terms == out[r].trajectory.terms);
    }
  }
}

TEST_CASE("open-loop generation reproduces a staircase rollout") {
  const auto m = make_models(21);
  Rng rng(22);
  const auto ctx = contexts(2, 1, rng);
  const auto cfg = config(6, 6, 1);
  const auto out = horizon_imagine(m.denoiser, m.policy, m.reward_term, cfg, ctx, Rng(8));
  for (std::size_t r = 0; r < 2; ++r) {
    Rng rr = Rng(8).fork(r);
    const auto noise = sample_rollout_noise(6, 2, 3, rr);
    const auto gen = generate_with_actions(m.denoiser, cfg.schedule, ctx[r], out[r].trajectory.actions, noise.latents);
    CHECK(gen.latents == out[r].trajectory.latents);
  }
  CHECK_THROWS_AS(generate_with_actions(m.denoiser, cfg.schedule, ctx[0], std::vector<int>(3, 0),
                                        std::vector<double>(12, 0.0)),
                  std::invalid_argument);
}

TEST_CASE("trace csv") {
  const auto m = make_models(23);
  Rng rng(24);
  const auto ctx = contexts(1, 1, rng);
  auto cfg = config(4, 4, 2);
  cfg.query_all_slots = true;
  const auto out = horizon_imagine(m.denoiser, m.policy, m.reward_term, cfg, ctx, Rng(9));
  std::ostringstream s;
  write_trace_csv(s, out[0]);
  std::istringstream in(s.str());
  std::string line;
  std::getline(in, line);
  CHECK(line == "b,t,tau,action,change_flag");
  std::size_t rows = 0;
  while (std::getline(in, line)) ++rows;
  CHECK(rows == 4 * 3);
  CHECK(s.str().find("\n0,0,0,") != std::string::npos);
}
