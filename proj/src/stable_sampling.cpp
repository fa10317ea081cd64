#include "hilab/stable_sampling.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace hilab {

namespace {

void require_same_size(std::size_t a, std::size_t b, const char* what) {
  if (a != b) {
    throw std::invalid_argument(std::string(what) + ": dimension mismatch (" + std::to_string(a) +
                                " vs " + std::to_string(b) + ")");
  }
}

// Tail masses S_i = sum_{j >= i} p[perm[j]], accumulated from the back.
void tail_masses(const ActionDistribution& p, const Permutation& perm, std::vector<double>& out) {
  const std::size_t n = p.size();
  out.resize(n);
  double acc = 0.0;
  for (std::size_t i = n; i-- > 0;) {
    acc += p[perm[i]];
    out[i] = acc;
  }
}

double threshold(double prob, double tail) {
  if (tail < kTailMassEpsilon) return prob;
  return std::min(1.0, prob / tail);
}

}  // namespace

ActionDistribution::ActionDistribution(std::vector<double> probs) : probs_(std::move(probs)) {
  if (probs_.empty()) throw std::invalid_argument("ActionDistribution: needs at least one action");
  double sum = 0.0;
  for (double v : probs_) {
    if (!std::isfinite(v) || v < 0.0) {
      throw std::invalid_argument("ActionDistribution: entries must be finite and non-negative");
    }
    sum += v;
  }
  if (std::abs(sum - 1.0) > kRenormTolerance) {
    throw std::invalid_argument("ActionDistribution: entries sum to " + std::to_string(sum));
  }
  if (sum != 1.0) {
    for (double& v : probs_) v /= sum;
  }
}

ActionDistribution ActionDistribution::from_logits(std::span<const double> logits) {
  if (logits.empty()) throw std::invalid_argument("from_logits: empty logits");
  const double mx = *std::max_element(logits.begin(), logits.end());
  std::vector<double> p(logits.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    p[i] = std::exp(logits[i] - mx);
    sum += p[i];
  }
  for (double& v : p) v /= sum;
  return ActionDistribution(std::move(p));
}

ActionDistribution ActionDistribution::uniform(std::size_t n) {
  return ActionDistribution(std::vector<double>(n, 1.0 / static_cast<double>(n)));
}

double ActionDistribution::entropy() const noexcept {
  double h = 0.0;
  for (double v : probs_) {
    if (v > 0.0) h -= v * std::log(v);
  }
  return h;
}

Permutation::Permutation(std::vector<std::size_t> order) : order_(std::move(order)) {
  std::vector<bool> seen(order_.size(), false);
  for (std::size_t v : order_) {
    if (v >= order_.size() || seen[v]) throw std::invalid_argument("Permutation: not a bijection");
    seen[v] = true;
  }
}

Permutation Permutation::identity(std::size_t n) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  return Permutation(std::move(order));
}

Permutation Permutation::random(std::size_t n, Rng& rng) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (std::size_t i = n; i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng.below(i));
    std::swap(order[i - 1], order[j]);
  }
  return Permutation(std::move(order));
}

DrawState::DrawState(std::vector<double> omega, Permutation perm)
    : omega_(std::move(omega)), perm_(std::move(perm)) {
  if (perm_.size() == 0) throw std::invalid_argument("DrawState: empty permutation");
  require_same_size(omega_.size() + 1, perm_.size(), "DrawState");
  for (double w : omega_) {
    if (!(w >= 0.0 && w < 1.0)) throw std::invalid_argument("DrawState: omega outside [0,1)");
  }
}

DrawState DrawState::random(std::size_t n, Rng& rng) {
  std::vector<double> omega(n - 1);
  for (double& w : omega) w = rng.uniform();
  Permutation perm = Permutation::random(n, rng);
  return DrawState(std::move(omega), std::move(perm));
}

std::vector<double> alpha_thresholds(const ActionDistribution& p, const Permutation& perm) {
  require_same_size(p.size(), perm.size(), "alpha_thresholds");
  std::vector<double> tails;
  tail_masses(p, perm, tails);
  std::vector<double> alpha(p.size() - 1);
  for (std::size_t i = 0; i < alpha.size(); ++i) alpha[i] = threshold(p[perm[i]], tails[i]);
  return alpha;
}

std::size_t sample_stable(const ActionDistribution& p, const DrawState& state) {
  require_same_size(p.size(), state.size(), "sample_stable");
  const Permutation& perm = state.perm();
  const auto omega = state.omega();
  thread_local std::vector<double> tails;
  tail_masses(p, perm, tails);
  for (std::size_t i = 0; i < omega.size(); ++i) {
    if (omega[i] < threshold(p[perm[i]], tails[i])) return perm[i];
  }
  return perm[p.size() - 1];
}

std::size_t sample_naive(const ActionDistribution& p, Rng& rng) {
  const double u = rng.uniform();
  double cdf = 0.0;
  std::size_t last_positive = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] <= 0.0) continue;
    last_positive = i;
    cdf += p[i];
    if (u < cdf) return i;
  }
  return last_positive;
}

double total_variation(const ActionDistribution& p, const ActionDistribution& q) {
  require_same_size(p.size(), q.size(), "total_variation");
  double acc = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) acc += std::abs(p[i] - q[i]);
  return 0.5 * acc;
}

double change_upper_bound(const ActionDistribution& p, const ActionDistribution& q,
                          const Permutation& perm) {
  require_same_size(p.size(), q.size(), "change_upper_bound");
  const auto ap = alpha_thresholds(p, perm);
  const auto aq = alpha_thresholds(q, perm);
  double acc = 0.0;
  for (std::size_t i = 0; i < ap.size(); ++i) acc += std::abs(ap[i] - aq[i]);
  return acc;
}

std::vector<double> sample_stable_continuous(const GaussianPolicyParams& params,
                                             std::span<const double> omega) {
  require_same_size(params.mu.size(), params.sigma.size(), "sample_stable_continuous");
  require_same_size(params.mu.size(), omega.size(), "sample_stable_continuous");
  std::vector<double> action(params.mu.size());
  for (std::size_t i = 0; i < action.size(); ++i) {
    if (!(params.sigma[i] > 0.0)) {
      throw std::invalid_argument("sample_stable_continuous: sigma must be positive");
    }
    action[i] = params.mu[i] + omega[i] * params.sigma[i];
  }
  return action;
}

}  // namespace hilab
