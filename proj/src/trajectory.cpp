#include "hilab/trajectory.hpp"

#include <stdexcept>

namespace hilab {

LatentTrajectory LatentTrajectory::zeros(std::size_t frames, std::size_t dim) {
  LatentTrajectory t;
  t.dim = dim;
  t.latents.assign(frames * dim, 0.0);
  t.actions.assign(frames > 0 ? frames - 1 : 0, 0);
  t.taus.assign(frames, 1.0);
  t.rewards.assign(frames, 0.0);
  t.terms.assign(frames, 0);
  t.mask.assign(frames, 1);
  return t;
}

void LatentTrajectory::check() const {
  const std::size_t n = frames();
  if (latents.size() != n * dim || rewards.size() != n || terms.size() != n || mask.size() != n ||
      actions.size() != (n > 0 ? n - 1 : 0)) {
    throw std::invalid_argument("LatentTrajectory: inconsistent field sizes");
  }
}

std::size_t denoiser_slot_width(const NetDims& dims) noexcept {
  return dims.latent_dim + dims.num_actions + 2;
}

std::size_t plain_slot_width(const NetDims& dims) noexcept { return dims.latent_dim + 2; }

Matrix denoiser_features(std::span<const FrameRef> refs, const NetDims& dims) {
  const std::size_t slot = denoiser_slot_width(dims);
  const std::size_t pad_action = dims.num_actions;
  Matrix x(refs.size(), slot * dims.window);
  for (std::size_t r = 0; r < refs.size(); ++r) {
    const LatentTrajectory& seq = *refs[r].seq;
    const std::size_t t = refs[r].frame;
    auto row = x.row(r);
    for (std::size_t w = 0; w < dims.window; ++w) {
      double* s = row.data() + w * slot;
      const std::size_t back = dims.window - 1 - w;
      if (back > t) {
        s[dims.latent_dim + pad_action] = 1.0;
        continue;
      }
      const std::size_t j = t - back;
      const auto z = seq.frame(j);
      for (std::size_t k = 0; k < dims.latent_dim; ++k) s[k] = z[k];
      const int a = seq.action_into(j);
      if (a != kNoAction && (a < 0 || static_cast<std::size_t>(a) >= dims.num_actions)) {
        throw std::invalid_argument("denoiser_features: action out of range");
      }
      s[dims.latent_dim + (a == kNoAction ? pad_action : static_cast<std::size_t>(a))] = 1.0;
      s[slot - 1] = seq.taus[j];
    }
  }
  return x;
}

Matrix plain_features(std::span<const FrameRef> refs, const NetDims& dims) {
  const std::size_t slot = plain_slot_width(dims);
  Matrix x(refs.size(), slot * dims.window);
  for (std::size_t r = 0; r < refs.size(); ++r) {
    const LatentTrajectory& seq = *refs[r].seq;
    const std::size_t t = refs[r].frame;
    auto row = x.row(r);
    for (std::size_t w = 0; w < dims.window; ++w) {
      const std::size_t back = dims.window - 1 - w;
      if (back > t) continue;
      const std::size_t j = t - back;
      double* s = row.data() + w * slot;
      s[0] = 1.0;
      const auto z = seq.frame(j);
      for (std::size_t k = 0; k < dims.latent_dim; ++k) s[1 + k] = z[k];
      s[slot - 1] = seq.taus[j];
    }
  }
  return x;
}

}  // namespace hilab
