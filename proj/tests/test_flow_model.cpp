#include <doctest.h>

#include <cmath>
#include <numbers>
#include <stdexcept>

#include "hilab/flow_model.hpp"
#include "hilab/symlog.hpp"
#include "support/fd.hpp"
#include "support/traj.hpp"

using namespace hilab;
using hilab::testing::random_trajectory;

namespace {

NetDims small_dims(std::size_t hidden = 8, std::size_t window = 4) { return {2, 3, window, hidden}; }

// Last tensor of an Mlp is the output bias.
void zero_except_output_bias(Mlp& net, std::vector<double> bias) {
  for (auto& t : net.params().tensors()) {
    for (double& v : t.values) v = 0.0;
  }
  net.params().tensors().back().values = std::move(bias);
}

}  // namespace

TEST_CASE("time sampling with a clean prefix") {
  Rng rng(1);
  constexpr int kDraws = 100000;
  int taken = 0;
  std::size_t lo = 100;
  std::size_t hi = 0;
  for (int i = 0; i < kDraws; ++i) {
    const auto s = sample_times_with_prefix(32, rng);
    REQUIRE(s.taus.size() == 32);
    for (double t : s.taus) {
      CHECK(t >= 0.0);
      CHECK(t <= 1.0);
    }
    if (s.prefix > 0) {
      ++taken;
      lo = std::min(lo, s.prefix);
      hi = std::max(hi, s.prefix);
      CHECK(s.taus[0] == 1.0);
      CHECK(s.taus[s.prefix - 1] == 1.0);
    }
  }
  CHECK(lo == 1);
  CHECK(hi == 22);
  const double sigma = std::sqrt(0.2 * 0.8 / kDraws);
  CHECK(std::abs(static_cast<double>(taken) / kDraws - 0.2) < 3 * sigma);
  CHECK_THROWS_AS(sample_times_with_prefix(1, rng), std::invalid_argument);
}

TEST_CASE("mixture endpoints are exact") {
  Rng rng(2);
  const auto clean = random_trajectory(5, 2, 3, rng);
  std::vector<double> noise(clean.latents.size());
  for (double& v : noise) v = rng.uniform(-1.0, 1.0);
  const std::vector<double> ones(5, 1.0);
  const std::vector<double> zeros(5, 0.0);
  CHECK(noisy_mixture(clean, noise, ones).latents == clean.latents);
  CHECK(noisy_mixture(clean, noise, zeros).latents == noise);
  CHECK_THROWS_AS(noisy_mixture(clean, noise, std::vector<double>(4, 0.0)), std::invalid_argument);
}

TEST_CASE("rectified flow loss vanishes when the output equals the target") {
  Rng rng(3);
  Denoiser model(small_dims(), rng);
  zero_except_output_bias(model.net(), {0.25, -0.5});
  auto clean = random_trajectory(4, 2, 3, rng);
  TrainBatch batch = TrainBatch::from_segments({clean}, rng);
  for (std::size_t t = 0; t < 4; ++t) {
    batch.noise[0][2 * t] = clean.latents[2 * t] - 0.25;
    batch.noise[0][2 * t + 1] = clean.latents[2 * t + 1] + 0.5;
  }
  const auto lg = rf_loss(model, batch);
  CHECK(lg.loss < 1e-24);
  CHECK(lg.grads.l2_norm() < 1e-12);
}

TEST_CASE("rectified flow loss gradient") {
  Rng rng(4);
  for (int trial = 0; trial < 4; ++trial) {
    Denoiser model(small_dims(8), rng);
    auto batch = TrainBatch::from_segments({random_trajectory(2, 2, 3, rng), random_trajectory(2, 2, 3, rng)}, rng);
    const auto lg = rf_loss(model, batch);
    const double err =
        hilab::testing::max_relative_fd_error(model.net().params(), lg.grads, [&] { return rf_loss(model, batch).loss; });
    CHECK(err < 1e-4);
  }
}

TEST_CASE("masked frames do not contribute") {
  Rng rng(5);
  Denoiser model(small_dims(), rng);
  auto seg = random_trajectory(4, 2, 3, rng);
  auto batch = TrainBatch::from_segments({seg}, rng);
  const double full = rf_loss(model, batch).loss;
  batch.clean[0].mask[3] = 0;
  const double masked = rf_loss(model, batch).loss;
  batch.noise[0][6] = 0.9;
  CHECK(rf_loss(model, batch).loss == masked);
  CHECK(masked != full);
}

TEST_CASE("reward and termination loss") {
  Rng rng(6);
  RewardTermModel model(small_dims(), rng);
  auto seg = LatentTrajectory::zeros(3);
  zero_except_output_bias(model.net(), {0.0, -40.0});
  CHECK(reward_term_loss(model, std::span(&seg, 1)).loss < 1e-15);

  seg.rewards = {std::numbers::e - 1, std::numbers::e - 1, std::numbers::e - 1};
  zero_except_output_bias(model.net(), {1.0, -40.0});
  CHECK(reward_term_loss(model, std::span(&seg, 1)).loss < 1e-15);

  // An uninformative logit pays log 2 per frame.
  zero_except_output_bias(model.net(), {1.0, 0.0});
  CHECK(reward_term_loss(model, std::span(&seg, 1)).loss == doctest::Approx(std::log(2.0)));

  for (int trial = 0; trial < 4; ++trial) {
    RewardTermModel m(small_dims(8), rng);
    std::vector<LatentTrajectory> segs{random_trajectory(3, 2, 3, rng), random_trajectory(2, 2, 3, rng)};
    const auto lg = reward_term_loss(m, segs);
    const double err =
        hilab::testing::max_relative_fd_error(m.net().params(), lg.grads, [&] { return reward_term_loss(m, segs).loss; });
    CHECK(err < 1e-4);
  }
}

TEST_CASE("denoiser is causal") {
  Rng rng(7);
  const Denoiser model(small_dims(16, 4), rng);
  auto seq = random_trajectory(8, 2, 3, rng);
  for (double& t : seq.taus) t = rng.uniform();
  std::vector<FrameRef> refs;
  for (std::size_t t = 0; t < 8; ++t) refs.push_back({&seq, t});
  const Matrix before = model.velocities(refs);
  for (std::size_t changed = 0; changed < 8; ++changed) {
    auto other = seq;
    other.latents[2 * changed] += 0.3;
    other.taus[changed] = 1.0 - other.taus[changed];
    if (changed > 0) other.actions[changed - 1] = (other.actions[changed - 1] + 1) % 3;
    std::vector<FrameRef> r2;
    for (std::size_t t = 0; t < 8; ++t) r2.push_back({&other, t});
    const Matrix after = model.velocities(r2);
    for (std::size_t t = 0; t < changed; ++t) {
      CHECK(after(t, 0) == before(t, 0));
      CHECK(after(t, 1) == before(t, 1));
    }
    CHECK(after(changed, 0) != before(changed, 0));
  }
}

TEST_CASE("euler steps") {
  std::vector<double> z{0.0, 0.0, 1.0, 1.0};
  const std::vector<double> v{0.5, -0.5, 2.0, 2.0};
  euler_step(z, v, std::vector<double>{0.2, 0.0}, 2);
  CHECK(z[0] == doctest::Approx(0.1));
  CHECK(z[1] == doctest::Approx(-0.1));
  CHECK(z[2] == 1.0);
  CHECK(z[3] == 1.0);

  std::vector<double> z0{-0.3, 0.8};
  const std::vector<double> z1{0.6, -0.2};
  const std::vector<double> vel{z1[0] - z0[0], z1[1] - z0[1]};
  euler_step(z0, vel, std::vector<double>{1.0}, 2);
  CHECK(z0[0] == doctest::Approx(z1[0]).epsilon(1e-15));
  CHECK(z0[1] == doctest::Approx(z1[1]).epsilon(1e-15));
  CHECK_THROWS_AS(euler_step(z0, vel, std::vector<double>{1.0, 1.0}, 2), std::invalid_argument);
}

TEST_CASE("training overfits a single batch") {
  Rng rng(8);
  Denoiser model(small_dims(32), rng);
  AdamConfig cfg;
  cfg.lr = 3e-3;
  AdamW opt(model.net().params(), cfg);
  const auto batch = TrainBatch::from_segments({random_trajectory(4, 2, 3, rng)}, rng);
  const double first = rf_loss(model, batch).loss;
  double last = first;
  for (int i = 0; i < 100; ++i) last = train_step(model, opt, batch);
  CHECK(last < 0.5 * first);
}

TEST_CASE("non-finite inputs are reported") {
  Rng rng(9);
  Denoiser model(small_dims(), rng);
  AdamW opt(model.net().params(), AdamConfig{});
  auto batch = TrainBatch::from_segments({random_trajectory(3, 2, 3, rng)}, rng);
  batch.noise[0][0] = std::nan("");
  CHECK_THROWS_AS(train_step(model, opt, batch), std::runtime_error);
}

TEST_CASE("symlog and symexp are inverse") {
  CHECK(symlog(0.0) == 0.0);
  CHECK(symlog(std::numbers::e - 1) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(symlog(-(std::numbers::e - 1)) == doctest::Approx(-1.0).epsilon(1e-15));
  for (double x : {-1000.0, -3.5, -1e-9, 0.0, 0.25, 7.0, 1e6}) {
    CHECK(symexp(symlog(x)) == doctest::Approx(x).epsilon(1e-12));
  }
}
