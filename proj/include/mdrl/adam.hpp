#pragma once

#include <cmath>
#include <vector>

#include "mdrl/common.hpp"

namespace mdrl {

// Adam-style optimizer: per-parameter step sizes from running first/second
// moment estimates.
class AdamOptimizer {
 public:
  explicit AdamOptimizer(std::size_t n, double step = 1e-3,
                         double beta1 = 0.9, double beta2 = 0.999,
                         double eps = 1e-8)
      : step_(step), beta1_(beta1), beta2_(beta2), eps_(eps), m_(n, 0.0),
        v_(n, 0.0) {}

  void update(std::vector<double>& params, const std::vector<double>& grad) {
    if (params.size() != m_.size() || grad.size() != m_.size())
      throw contract_error("AdamOptimizer: size mismatch");
    ++t_;
    double c1 = 1.0 - std::pow(beta1_, t_);
    double c2 = 1.0 - std::pow(beta2_, t_);
    for (std::size_t i = 0; i < params.size(); ++i) {
      m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * grad[i];
      v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * grad[i] * grad[i];
      double mhat = m_[i] / c1;
      double vhat = v_[i] / c2;
      params[i] -= step_ * mhat / (std::sqrt(vhat) + eps_);
    }
  }

 private:
  double step_, beta1_, beta2_, eps_;
  long t_ = 0;
  std::vector<double> m_, v_;
};

}  // namespace mdrl
