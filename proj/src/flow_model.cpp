#include "hilab/flow_model.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "hilab/symlog.hpp"

namespace hilab {

Denoiser::Denoiser(NetDims dims, Rng& rng)
    : dims_(dims),
      net_(denoiser_slot_width(dims) * dims.window, {dims.hidden, dims.hidden}, dims.latent_dim, rng) {}

Denoiser::Denoiser(NetDims dims, Mlp net) : dims_(dims), net_(std::move(net)) {
  if (net_.in_dim() != denoiser_slot_width(dims) * dims.window || net_.out_dim() != dims.latent_dim) {
    throw std::invalid_argument("Denoiser: network shape does not match dims");
  }
}

Matrix Denoiser::velocities(std::span<const FrameRef> refs) const {
  return net_.forward(denoiser_features(refs, dims_));
}

RewardTermModel::RewardTermModel(NetDims dims, Rng& rng)
    : dims_(dims), net_(plain_slot_width(dims) * dims.window, {dims.hidden, dims.hidden}, 2, rng) {}

RewardTermModel::RewardTermModel(NetDims dims, Mlp net) : dims_(dims), net_(std::move(net)) {
  if (net_.in_dim() != plain_slot_width(dims) * dims.window || net_.out_dim() != 2) {
    throw std::invalid_argument("RewardTermModel: network shape does not match dims");
  }
}

Matrix RewardTermModel::predict(std::span<const FrameRef> refs) const {
  return net_.forward(plain_features(refs, dims_));
}

SampledTimes sample_times_with_prefix(std::size_t horizon, Rng& rng) {
  if (horizon < 2) throw std::invalid_argument("sample_times_with_prefix: horizon must be >= 2");
  SampledTimes out;
  out.taus.resize(horizon);
  for (double& t : out.taus) t = rng.uniform();
  if (rng.bernoulli(kCleanPrefixProb)) {
    const auto max_prefix = static_cast<std::size_t>(std::floor(kCleanPrefixFraction * static_cast<double>(horizon)));
    out.prefix = 1 + static_cast<std::size_t>(rng.below(max_prefix));
    for (std::size_t t = 0; t < out.prefix; ++t) out.taus[t] = 1.0;
  }
  return out;
}

TrainBatch TrainBatch::from_segments(std::vector<LatentTrajectory> clean, Rng& rng) {
  TrainBatch batch;
  batch.clean = std::move(clean);
  for (const auto& seg : batch.clean) {
    seg.check();
    std::vector<double> z0(seg.latents.size());
    for (double& v : z0) v = rng.uniform(-1.0, 1.0);
    batch.noise.push_back(std::move(z0));
    batch.times.push_back(sample_times_with_prefix(seg.frames(), rng).taus);
  }
  return batch;
}

LatentTrajectory noisy_mixture(const LatentTrajectory& clean, std::span<const double> noise,
                               std::span<const double> times) {
  if (noise.size() != clean.latents.size() || times.size() != clean.frames()) {
    throw std::invalid_argument("noisy_mixture: shape mismatch");
  }
  LatentTrajectory out = clean;
  for (std::size_t t = 0; t < clean.frames(); ++t) {
    const double tau = times[t];
    out.taus[t] = tau;
    for (std::size_t k = 0; k < clean.dim; ++k) {
      const std::size_t i = t * clean.dim + k;
      out.latents[i] = tau * clean.latents[i] + (1.0 - tau) * noise[i];
    }
  }
  return out;
}

LossAndGrad rf_loss(const Denoiser& model, const TrainBatch& batch) {
  const std::size_t d = model.dims().latent_dim;
  std::vector<LatentTrajectory> noisy;
  noisy.reserve(batch.clean.size());
  for (std::size_t i = 0; i < batch.clean.size(); ++i) {
    if (batch.clean[i].dim != d) throw std::invalid_argument("rf_loss: latent dim mismatch");
    noisy.push_back(noisy_mixture(batch.clean[i], batch.noise[i], batch.times[i]));
  }
  std::vector<FrameRef> refs;
  std::vector<std::size_t> owner;
  for (std::size_t i = 0; i < noisy.size(); ++i) {
    for (std::size_t t = 0; t < noisy[i].frames(); ++t) {
      if (!noisy[i].mask[t]) continue;
      refs.push_back({&noisy[i], t});
      owner.push_back(i);
    }
  }
  LossAndGrad out{0.0, model.net().params().zeros_like()};
  if (refs.empty()) return out;

  Mlp::Trace trace;
  const Matrix v = model.net().forward(denoiser_features(refs, model.dims()), trace);
  Matrix dv(v.rows, v.cols);
  const double inv_count = 1.0 / static_cast<double>(refs.size());
  for (std::size_t r = 0; r < refs.size(); ++r) {
    const std::size_t i = owner[r];
    const std::size_t t = refs[r].frame;
    for (std::size_t k = 0; k < d; ++k) {
      const std::size_t idx = t * d + k;
      const double target = batch.clean[i].latents[idx] - batch.noise[i][idx];
      const double err = v(r, k) - target;
      out.loss += err * err;
      dv(r, k) = 2.0 * err * inv_count;
    }
  }
  out.loss *= inv_count;
  model.net().backward(trace, dv, out.grads);
  return out;
}

LossAndGrad reward_term_loss(const RewardTermModel& model, std::span<const LatentTrajectory> clean) {
  std::vector<FrameRef> refs;
  for (const auto& seg : clean) {
    for (std::size_t t = 0; t < seg.frames(); ++t) {
      if (seg.mask[t]) refs.push_back({&seg, t});
    }
  }
  LossAndGrad out{0.0, model.net().params().zeros_like()};
  if (refs.empty()) return out;

  Mlp::Trace trace;
  const Matrix y = model.net().forward(plain_features(refs, model.dims()), trace);
  Matrix dy(y.rows, y.cols);
  const double inv_count = 1.0 / static_cast<double>(refs.size());
  for (std::size_t r = 0; r < refs.size(); ++r) {
    const LatentTrajectory& seg = *refs[r].seq;
    const std::size_t t = refs[r].frame;
    const double err = y(r, 0) - symlog(seg.rewards[t]);
    const double logit = y(r, 1);
    const double label = seg.terms[t] ? 1.0 : 0.0;
    // Stable BCE-with-logits.
    const double bce = std::max(logit, 0.0) - logit * label + std::log1p(std::exp(-std::abs(logit)));
    out.loss += err * err + bce;
    dy(r, 0) = 2.0 * err * inv_count;
    dy(r, 1) = (1.0 / (1.0 + std::exp(-logit)) - label) * inv_count;
  }
  out.loss *= inv_count;
  model.net().backward(trace, dy, out.grads);
  return out;
}

void euler_step(std::span<double> z, std::span<const double> v, std::span<const double> dtau, std::size_t dim) {
  if (z.size() != v.size() || z.size() != dtau.size() * dim) {
    throw std::invalid_argument("euler_step: shape mismatch");
  }
  for (std::size_t t = 0; t < dtau.size(); ++t) {
    if (!(dtau[t] > 0.0)) continue;
    for (std::size_t k = 0; k < dim; ++k) z[t * dim + k] += v[t * dim + k] * dtau[t];
  }
}

namespace {

double apply_update(Mlp& net, AdamW& optimizer, LossAndGrad& lg, const char* what) {
  if (!std::isfinite(lg.loss)) {
    throw std::runtime_error(std::string(what) + ": non-finite loss (divergence)");
  }
  if (!lg.grads.all_finite()) {
    throw std::runtime_error(std::string(what) + ": non-finite gradient at loss " + std::to_string(lg.loss));
  }
  optimizer.step(net.params(), lg.grads);
  return lg.loss;
}

}  // namespace

double train_step(Denoiser& model, AdamW& optimizer, const TrainBatch& batch) {
  LossAndGrad lg = rf_loss(model, batch);
  return apply_update(model.net(), optimizer, lg, "denoiser train_step");
}

double train_step(RewardTermModel& model, AdamW& optimizer, std::span<const LatentTrajectory> clean) {
  LossAndGrad lg = reward_term_loss(model, clean);
  return apply_update(model.net(), optimizer, lg, "reward-termination train_step");
}

}  // namespace hilab
