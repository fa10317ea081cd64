#include "hilab/replay.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>

namespace hilab {

MixedIndex sample_mixed_index(std::size_t count, Rng& rng) {
  if (count == 0) throw std::invalid_argument("sample_mixed_index: empty range");
  if (rng.bernoulli(kUniformReplayFraction)) return {static_cast<std::size_t>(rng.below(count)), true};
  // Beta(3,1) has CDF x^3, so u^(1/3) is an exact inverse-CDF draw.
  const double x = std::cbrt(rng.uniform());
  const auto i = static_cast<std::size_t>(x * static_cast<double>(count));
  return {std::min(i, count - 1), false};
}

void ReplayBuffer::begin_episode(const Observation& first) {
  if (!episodes_.empty() && !episodes_.back().closed() && episodes_.back().frames() == 1) {
    episodes_.back().obs[0] = first;
    return;
  }
  Episode e;
  e.obs.push_back(first);
  e.rewards.push_back(0.0);
  episodes_.push_back(std::move(e));
}

void ReplayBuffer::add_step(int action, const StepResult& result) {
  if (episodes_.empty() || episodes_.back().closed()) {
    throw std::logic_error("ReplayBuffer::add_step: no open episode");
  }
  Episode& e = episodes_.back();
  e.actions.push_back(action);
  e.obs.push_back(result.obs);
  e.rewards.push_back(result.reward);
  e.terminated = result.terminated;
  e.truncated = result.truncated && !result.terminated;
  ++transitions_;
}

std::vector<LatentTrajectory> ReplayBuffer::sample_segments(std::size_t batch, std::size_t length, Rng& rng) const {
  return sample(batch, length, false, rng);
}

std::vector<LatentTrajectory> ReplayBuffer::sample_contexts(std::size_t batch, std::size_t length, Rng& rng) const {
  return sample(batch, length, true, rng);
}

std::vector<LatentTrajectory> ReplayBuffer::sample(std::size_t batch, std::size_t length, bool for_context,
                                                   Rng& rng) const {
  if (length == 0) throw std::invalid_argument("ReplayBuffer: segment length must be positive");
  // Starts per eligible episode, in insertion order so that higher global
  // indices are more recent.
  std::vector<std::size_t> owner;
  std::vector<std::size_t> first;
  std::size_t total = 0;
  for (std::size_t e = 0; e < episodes_.size(); ++e) {
    const Episode& ep = episodes_[e];
    std::size_t usable = ep.frames();
    if (for_context) {
      if (ep.terminated) --usable;
      if (usable < length) continue;
    } else if (usable < 2) {
      continue;
    }
    const std::size_t starts = usable >= length ? usable - length + 1 : 1;
    owner.push_back(e);
    first.push_back(total);
    total += starts;
  }
  if (total == 0) throw std::runtime_error("ReplayBuffer: no segment available");

  std::vector<LatentTrajectory> out;
  out.reserve(batch);
  for (std::size_t n = 0; n < batch; ++n) {
    const std::size_t g = sample_mixed_index(total, rng).index;
    const std::size_t slot = static_cast<std::size_t>(std::upper_bound(first.begin(), first.end(), g) - first.begin()) - 1;
    const Episode& ep = episodes_[owner[slot]];
    const std::size_t start = g - first[slot];
    LatentTrajectory seg = LatentTrajectory::zeros(length);
    for (std::size_t j = 0; j < length; ++j) {
      const std::size_t src = start + j;
      const bool real = src < ep.frames();
      const std::size_t f = real ? src : ep.frames() - 1;
      auto z = seg.frame(j);
      const Observation latent = encode(ep.obs[f]);
      std::copy(latent.begin(), latent.end(), z.begin());
      seg.mask[j] = real ? 1 : 0;
      seg.rewards[j] = real ? ep.rewards[f] : 0.0;
      seg.terms[j] = real && ep.terminated && f + 1 == ep.frames() ? 1 : 0;
      if (j + 1 < length) seg.actions[j] = src + 1 < ep.frames() ? ep.actions[src] : 0;
    }
    out.push_back(std::move(seg));
  }
  return out;
}

void ReplayBuffer::write_csv(const std::filesystem::path& path) const {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write replay file " + path.string());
  f << "episode,t,x,y,action,reward,terminated,truncated\n";
  char line[256];
  for (std::size_t e = 0; e < episodes_.size(); ++e) {
    const Episode& ep = episodes_[e];
    for (std::size_t t = 0; t < ep.frames(); ++t) {
      const bool last = t + 1 == ep.frames();
      std::snprintf(line, sizeof line, "%zu,%zu,%.17g,%.17g,%d,%.17g,%d,%d\n", e, t, ep.obs[t][0], ep.obs[t][1],
                    t == 0 ? -1 : ep.actions[t - 1], ep.rewards[t], last && ep.terminated ? 1 : 0,
                    last && ep.truncated ? 1 : 0);
      f << line;
    }
  }
  if (!f) throw std::runtime_error("error writing replay file " + path.string());
}

ReplayBuffer ReplayBuffer::read_csv(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open replay file " + path.string());
  ReplayBuffer buf;
  std::string line;
  std::size_t lineno = 0;
  long long current = -1;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#' || line.rfind("episode,", 0) == 0) continue;
    std::istringstream in(line);
    std::string cell;
    std::vector<std::string> cells;
    while (std::getline(in, cell, ',')) cells.push_back(cell);
    if (cells.size() != 8) {
      throw std::runtime_error(path.string() + ":" + std::to_string(lineno) + ": expected 8 columns");
    }
    try {
      const long long ep = std::stoll(cells[0]);
      const std::size_t t = std::stoul(cells[1]);
      StepResult r;
      r.obs = {std::stod(cells[2]), std::stod(cells[3])};
      r.reward = std::stod(cells[5]);
      r.terminated = cells[6] == "1";
      r.truncated = cells[7] == "1";
      if (ep != current) {
        if (t != 0) throw std::runtime_error("episode does not start at t=0");
        buf.episodes_.push_back(Episode{{r.obs}, {}, {r.reward}, r.terminated, r.truncated});
        current = ep;
      } else {
        buf.add_step(std::stoi(cells[4]), r);
      }
    } catch (const std::logic_error& e) {
      throw std::runtime_error(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return buf;
}

}  // namespace hilab
