#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "mdrl/common.hpp"

namespace mdrl {

inline double dot(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw contract_error("dot: size mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

// y += alpha * x
inline void axpy(double alpha, const std::vector<double>& x,
                 std::vector<double>& y) {
  if (x.size() != y.size()) throw contract_error("axpy: size mismatch");
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

inline void scale(std::vector<double>& x, double alpha) {
  for (double& v : x) v *= alpha;
}

inline double norm2(const std::vector<double>& x) {
  return std::sqrt(dot(x, x));
}

inline bool all_finite(const std::vector<double>& x) {
  for (double v : x)
    if (!std::isfinite(v)) return false;
  return true;
}

}  // namespace mdrl
