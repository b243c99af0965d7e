#pragma once

// Shared helpers for the test suites: central-difference gradients and
// relative-error measures used to check every analytic derivative.

#include <cmath>
#include <cstddef>
#include <functional>
#include <vector>

namespace testutil {

using ScalarFn = std::function<double(const std::vector<double>&)>;

inline double rel_err(double a, double b) {
  double denom = std::max(std::max(std::fabs(a), std::fabs(b)), 1e-8);
  return std::fabs(a - b) / denom;
}

// ||a - b|| / max(||a||, ||b||); the headline gradient-check measure.
inline double vec_rel_err(const std::vector<double>& a,
                          const std::vector<double>& b) {
  double diff = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  double denom = std::max(std::max(std::sqrt(na), std::sqrt(nb)), 1e-12);
  return std::sqrt(diff) / denom;
}

inline std::vector<double> fd_grad(const ScalarFn& f, std::vector<double> x,
                                   double eps = 1e-5) {
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    double keep = x[i];
    x[i] = keep + eps;
    double fp = f(x);
    x[i] = keep - eps;
    double fm = f(x);
    x[i] = keep;
    g[i] = (fp - fm) / (2.0 * eps);
  }
  return g;
}

// Directional derivative (f(x + eps d) - f(x - eps d)) / 2 eps: one probe
// that exercises every coordinate of the analytic gradient at once.
inline double fd_directional(const ScalarFn& f, const std::vector<double>& x,
                             const std::vector<double>& d, double eps = 1e-6) {
  std::vector<double> xp = x, xm = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    xp[i] += eps * d[i];
    xm[i] -= eps * d[i];
  }
  return (f(xp) - f(xm)) / (2.0 * eps);
}

inline double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace testutil
