#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "mdrl/common.hpp"

namespace mdrl {

// Generalized advantage estimation for one episode. The episode is complete
// (terminal or cut at the turn cap), so the value of the successor of the
// last state is 0. targets are the discounted returns-to-go used to fit the
// value baseline.
inline void gae_episode(const std::vector<double>& rewards,
                        const std::vector<double>& values, double gamma,
                        double lambda, std::vector<double>& advantages,
                        std::vector<double>& targets) {
  if (rewards.empty()) throw config_error("gae_episode: empty episode");
  if (rewards.size() != values.size())
    throw config_error("gae_episode: rewards/values length mismatch");
  std::size_t T = rewards.size();
  advantages.assign(T, 0.0);
  targets.assign(T, 0.0);
  double next_adv = 0.0, next_ret = 0.0, next_value = 0.0;
  for (std::size_t t = T; t-- > 0;) {
    double delta = rewards[t] + gamma * next_value - values[t];
    next_adv = delta + gamma * lambda * next_adv;
    next_ret = rewards[t] + gamma * next_ret;
    advantages[t] = next_adv;
    targets[t] = next_ret;
    next_value = values[t];
  }
}

// In-place zero-mean unit-variance normalization over the whole update batch
// (population variance). Degenerate batches are centered only.
inline void normalize_advantages(std::vector<std::vector<double>>& adv) {
  std::size_t n = 0;
  double sum = 0.0;
  for (const auto& a : adv)
    for (double v : a) {
      sum += v;
      ++n;
    }
  if (n == 0) throw config_error("normalize_advantages: empty batch");
  double mean = sum / double(n);
  double var = 0.0;
  for (const auto& a : adv)
    for (double v : a) var += (v - mean) * (v - mean);
  var /= double(n);
  double inv_std = var > 1e-24 ? 1.0 / std::sqrt(var) : 0.0;
  for (auto& a : adv)
    for (double& v : a) v = (v - mean) * inv_std;
}

}  // namespace mdrl
