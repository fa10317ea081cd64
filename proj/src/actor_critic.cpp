#include "hilab/actor_critic.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace hilab {

PolicyModel::PolicyModel(NetDims dims, Rng& rng)
    : dims_(dims),
      net_(plain_slot_width(dims) * dims.window, {dims.hidden, dims.hidden}, dims.num_actions, rng) {}

PolicyModel::PolicyModel(NetDims dims, Mlp net) : dims_(dims), net_(std::move(net)) {
  if (net_.in_dim() != plain_slot_width(dims) * dims.window || net_.out_dim() != dims.num_actions) {
    throw std::invalid_argument("PolicyModel: network shape does not match dims");
  }
}

Matrix PolicyModel::logits(std::span<const FrameRef> refs) const {
  return net_.forward(plain_features(refs, dims_));
}

std::vector<ActionDistribution> PolicyModel::distributions(std::span<const FrameRef> refs) const {
  const Matrix l = logits(refs);
  std::vector<ActionDistribution> out;
  out.reserve(refs.size());
  for (std::size_t r = 0; r < l.rows; ++r) out.push_back(ActionDistribution::from_logits(l.row(r)));
  return out;
}

CriticModel::CriticModel(NetDims dims, Rng& rng)
    : dims_(dims), net_(plain_slot_width(dims) * dims.window, {dims.hidden, dims.hidden}, 1, rng) {}

CriticModel::CriticModel(NetDims dims, Mlp net) : dims_(dims), net_(std::move(net)) {
  if (net_.in_dim() != plain_slot_width(dims) * dims.window || net_.out_dim() != 1) {
    throw std::invalid_argument("CriticModel: network shape does not match dims");
  }
}

std::vector<double> CriticModel::values(std::span<const FrameRef> refs) const {
  return net_.forward(plain_features(refs, dims_)).data;
}

std::vector<double> lambda_returns(std::span<const double> rewards, std::span<const std::uint8_t> terms,
                                   std::span<const double> values, double gamma, double lambda,
                                   std::span<const std::uint8_t> truncated) {
  const std::size_t n = values.size();
  if (rewards.size() != n || terms.size() != n || (!truncated.empty() && truncated.size() != n)) {
    throw std::invalid_argument("lambda_returns: length mismatch");
  }
  if (n == 0) return {};
  std::vector<double> boot(n);
  for (std::size_t t = 0; t < n; ++t) boot[t] = symexp(values[t]);
  std::vector<double> g(n);
  g[n - 1] = boot[n - 1];
  for (std::size_t t = n - 1; t-- > 0;) {
    const double cont = gamma * (1.0 - static_cast<double>(terms[t]));
    const double next = (!truncated.empty() && truncated[t]) ? boot[t + 1] : g[t + 1];
    g[t] = rewards[t] + cont * ((1.0 - lambda) * boot[t + 1] + lambda * next);
  }
  return g;
}

double quantile_linear(std::vector<double> sample, double q) {
  if (sample.empty()) throw std::invalid_argument("quantile_linear: empty sample");
  std::sort(sample.begin(), sample.end());
  const double pos = q * static_cast<double>(sample.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sample.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sample[lo] + frac * (sample[hi] - sample[lo]);
}

void AdvantageScaler::update(std::span<const double> returns) {
  if (returns.empty()) throw std::invalid_argument("AdvantageScaler: empty batch");
  std::vector<double> sample(returns.begin(), returns.end());
  const double spread = quantile_linear(sample, 0.95) - quantile_linear(sample, 0.05);
  ema_spread = (1.0 - decay) * ema_spread + decay * spread;
}

std::vector<double> advantages(std::span<const double> returns, std::span<const double> values,
                               AdvantageScaler& scaler) {
  if (returns.size() != values.size()) throw std::invalid_argument("advantages: length mismatch");
  scaler.update(returns);
  const double div = scaler.divisor();
  std::vector<double> a(returns.size());
  for (std::size_t t = 0; t < a.size(); ++t) a[t] = (returns[t] - symexp(values[t])) / div;
  return a;
}

ActorLoss actor_loss(const PolicyModel& policy, std::span<const ActorSample> samples, double entropy_weight) {
  ActorLoss out{0.0, 0.0, policy.net().params().zeros_like()};
  if (samples.empty()) return out;
  std::vector<FrameRef> refs;
  refs.reserve(samples.size());
  for (const auto& s : samples) refs.push_back(s.ref);

  Mlp::Trace trace;
  const Matrix logits = policy.net().forward(plain_features(refs, policy.dims()), trace);
  const std::size_t n = logits.cols;
  Matrix dlogits(logits.rows, n);
  const double inv_count = 1.0 / static_cast<double>(samples.size());
  std::vector<double> logp(n);
  std::vector<double> p(n);
  for (std::size_t r = 0; r < samples.size(); ++r) {
    const auto row = logits.row(r);
    const double mx = *std::max_element(row.begin(), row.end());
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) sum += std::exp(row[i] - mx);
    const double lse = mx + std::log(sum);
    double entropy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      logp[i] = row[i] - lse;
      p[i] = std::exp(logp[i]);
      entropy -= p[i] * logp[i];
    }
    const ActorSample& s = samples[r];
    if (s.action >= n) throw std::invalid_argument("actor_loss: action out of range");
    out.loss -= (s.advantage * logp[s.action] + entropy_weight * entropy) * inv_count;
    out.mean_entropy += entropy * inv_count;
    for (std::size_t i = 0; i < n; ++i) {
      const double dlogp = (i == s.action ? 1.0 : 0.0) - p[i];
      const double dent = -p[i] * (logp[i] + entropy);
      dlogits(r, i) = -(s.advantage * dlogp + entropy_weight * dent) * inv_count;
    }
  }
  policy.net().backward(trace, dlogits, out.grads);
  return out;
}

LossAndGrad critic_loss(const CriticModel& critic, std::span<const FrameRef> states,
                        std::span<const double> returns) {
  if (states.size() != returns.size()) throw std::invalid_argument("critic_loss: length mismatch");
  LossAndGrad out{0.0, critic.net().params().zeros_like()};
  if (states.empty()) return out;
  Mlp::Trace trace;
  const Matrix v = critic.net().forward(plain_features(states, critic.dims()), trace);
  Matrix dv(v.rows, 1);
  const double inv_count = 1.0 / static_cast<double>(states.size());
  for (std::size_t r = 0; r < states.size(); ++r) {
    const double err = v(r, 0) - symlog(returns[r]);
    out.loss += err * err * inv_count;
    dv(r, 0) = 2.0 * err * inv_count;
  }
  critic.net().backward(trace, dv, out.grads);
  return out;
}

std::vector<UpdatePair> actor_update_pairs(const ScheduleMatrix& schedule) {
  std::vector<UpdatePair> pairs;
  for (std::size_t b = 0; b < schedule.budget(); ++b) {
    for (std::size_t slot = 0; slot + 1 < schedule.horizon(); ++slot) {
      if (schedule(b + 1, slot + 1) > schedule(b, slot + 1)) pairs.push_back({b, slot});
    }
  }
  return pairs;
}

}  // namespace hilab
