#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "hilab/flow_model.hpp"
#include "hilab/nn.hpp"
#include "hilab/schedules.hpp"
#include "hilab/stable_sampling.hpp"
#include "hilab/symlog.hpp"
#include "hilab/trajectory.hpp"

namespace hilab {

/// Categorical policy over the causal window of (z, tau). Action inputs are
/// deliberately absent; observations carry enough information here.
class PolicyModel {
 public:
  PolicyModel() = default;
  PolicyModel(NetDims dims, Rng& rng);
  PolicyModel(NetDims dims, Mlp net);

  [[nodiscard]] const NetDims& dims() const noexcept { return dims_; }
  Mlp& net() noexcept { return net_; }
  [[nodiscard]] const Mlp& net() const noexcept { return net_; }

  [[nodiscard]] Matrix logits(std::span<const FrameRef> refs) const;
  [[nodiscard]] std::vector<ActionDistribution> distributions(std::span<const FrameRef> refs) const;

 private:
  NetDims dims_;
  Mlp net_;
};

/// State value in symlog space, evaluated on clean windows only.
class CriticModel {
 public:
  CriticModel() = default;
  CriticModel(NetDims dims, Rng& rng);
  CriticModel(NetDims dims, Mlp net);

  [[nodiscard]] const NetDims& dims() const noexcept { return dims_; }
  Mlp& net() noexcept { return net_; }
  [[nodiscard]] const Mlp& net() const noexcept { return net_; }

  [[nodiscard]] std::vector<double> values(std::span<const FrameRef> refs) const;

 private:
  NetDims dims_;
  Mlp net_;
};

/// Backward lambda-return recursion over L aligned entries:
///
///   G[L-1] = symexp(V[L-1])
///   G[t]   = r[t] + gamma (1 - d[t]) ((1 - lambda) symexp(V[t+1]) + lambda G[t+1])
///
/// `values` are critic outputs in symlog space. When `truncated[t]` is set
/// the episode was cut by a time limit after transition t, so the return
/// bootstraps fully from V[t+1] instead of chaining into G[t+1].
std::vector<double> lambda_returns(std::span<const double> rewards, std::span<const std::uint8_t> terms,
                                   std::span<const double> values, double gamma, double lambda,
                                   std::span<const std::uint8_t> truncated = {});

/// Linear-interpolation quantile of an unsorted sample, q in [0, 1].
double quantile_linear(std::vector<double> sample, double q);

/// EMA of the 5%-95% return spread used to normalize advantages.
struct AdvantageScaler {
  double ema_spread = 0.0;
  double decay = 0.005;

  void update(std::span<const double> returns);
  [[nodiscard]] double divisor() const noexcept { return ema_spread > 1.0 ? ema_spread : 1.0; }
};

/// Updates `scaler` with the batch returns, then returns
/// (G - symexp(V)) / max(1, S). The result is a plain constant to the actor.
std::vector<double> advantages(std::span<const double> returns, std::span<const double> values,
                               AdvantageScaler& scaler);

/// One REINFORCE term: the policy window `ref`, the realized action and its
/// advantage.
struct ActorSample {
  FrameRef ref;
  std::size_t action;
  double advantage;
};

struct ActorLoss {
  double loss = 0.0;
  double mean_entropy = 0.0;
  ParamSet grads;
};

/// -(1/P) sum_p [A_p log pi(a_p) + eta H(pi_p)] over the supplied samples.
ActorLoss actor_loss(const PolicyModel& policy, std::span<const ActorSample> samples, double entropy_weight);

/// Mean over `states` of (symlog(G) - V)^2.
LossAndGrad critic_loss(const CriticModel& critic, std::span<const FrameRef> states,
                        std::span<const double> returns);

/// (step, slot) pairs that receive actor updates: slot i's action is trained
/// at step b only if the next frame (column i+1) gains denoising time.
struct UpdatePair {
  std::size_t step;
  std::size_t slot;
  friend bool operator==(const UpdatePair&, const UpdatePair&) = default;
};
std::vector<UpdatePair> actor_update_pairs(const ScheduleMatrix& schedule);

}  // namespace hilab
