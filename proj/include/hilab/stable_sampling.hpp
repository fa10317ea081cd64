#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "hilab/rng.hpp"

namespace hilab {

/// A categorical distribution over N >= 1 actions.
///
/// Construction renormalizes inputs whose sum is within 1e-6 of one and
/// rejects anything further off, negative, or non-finite.
class ActionDistribution {
 public:
  static constexpr double kRenormTolerance = 1e-6;

  explicit ActionDistribution(std::vector<double> probs);

  /// Numerically stable softmax of raw logits.
  static ActionDistribution from_logits(std::span<const double> logits);
  static ActionDistribution uniform(std::size_t n);

  [[nodiscard]] std::size_t size() const noexcept { return probs_.size(); }
  [[nodiscard]] double operator[](std::size_t i) const noexcept { return probs_[i]; }
  [[nodiscard]] std::span<const double> probs() const noexcept { return probs_; }
  [[nodiscard]] double entropy() const noexcept;

  friend bool operator==(const ActionDistribution&, const ActionDistribution&) = default;

 private:
  std::vector<double> probs_;
};

/// A bijection on {0, ..., N-1}; `perm[i]` is the action scanned i-th.
class Permutation {
 public:
  explicit Permutation(std::vector<std::size_t> order);
  static Permutation identity(std::size_t n);
  /// Fisher-Yates shuffle.
  static Permutation random(std::size_t n, Rng& rng);

  [[nodiscard]] std::size_t size() const noexcept { return order_.size(); }
  [[nodiscard]] std::size_t operator[](std::size_t i) const noexcept { return order_[i]; }

 private:
  std::vector<std::size_t> order_;
};

/// Per-timestep coupling randomness: omega in [0,1)^(N-1) and an order.
class DrawState {
 public:
  DrawState(std::vector<double> omega, Permutation perm);
  static DrawState random(std::size_t n, Rng& rng);

  [[nodiscard]] std::size_t size() const noexcept { return perm_.size(); }
  [[nodiscard]] std::span<const double> omega() const noexcept { return omega_; }
  [[nodiscard]] const Permutation& perm() const noexcept { return perm_; }

 private:
  std::vector<double> omega_;
  Permutation perm_;
};

/// Threshold below which a tail mass S_i(p) counts as zero.
inline constexpr double kTailMassEpsilon = 1e-12;

/// Conditional acceptance thresholds alpha_i = p_perm(i) / S_i(p), i < N-1.
std::vector<double> alpha_thresholds(const ActionDistribution& p, const Permutation& perm);

/// Coupled sampler: the first perm(i) whose omega_i falls below alpha_i,
/// or perm(N-1) when none does. Pure function of (p, state).
std::size_t sample_stable(const ActionDistribution& p, const DrawState& state);

/// Plain inverse-CDF draw with fresh randomness.
std::size_t sample_naive(const ActionDistribution& p, Rng& rng);

double total_variation(const ActionDistribution& p, const ActionDistribution& q);

/// ||alpha(p) - alpha(q)||_1 under `perm`; upper bound on the change rate.
double change_upper_bound(const ActionDistribution& p, const ActionDistribution& q,
                          const Permutation& perm);

struct GaussianPolicyParams {
  std::vector<double> mu;
  std::vector<double> sigma;
};

/// Reparameterized continuous action mu + omega * sigma.
std::vector<double> sample_stable_continuous(const GaussianPolicyParams& params,
                                             std::span<const double> omega);

}  // namespace hilab
