#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "mdrl/common.hpp"
#include "mdrl/vecmath.hpp"

namespace mdrl {

struct CgResult {
  std::vector<double> x;
  double residual_norm = 0.0;
  std::size_t iterations = 0;
};

// Solves (A)x = g for a symmetric positive definite operator given only as a
// matrix-vector product. Stops early once the residual falls under tol.
template <typename MatVec>
CgResult conjugate_gradient(MatVec&& apply, const std::vector<double>& g,
                            std::size_t max_iters, double tol = 1e-10) {
  std::size_t n = g.size();
  CgResult res;
  res.x.assign(n, 0.0);
  std::vector<double> r = g, p = g, ap(n);
  double rs = dot(r, r);
  res.residual_norm = std::sqrt(rs);
  if (res.residual_norm < tol) return res;
  for (std::size_t it = 0; it < max_iters; ++it) {
    apply(p, ap);
    double p_ap = dot(p, ap);
    if (!std::isfinite(p_ap) || p_ap <= 0.0)
      throw numeric_error("conjugate_gradient: operator not PD (p'Ap = " +
                          std::to_string(p_ap) + " at iteration " +
                          std::to_string(it) + ")");
    double alpha = rs / p_ap;
    axpy(alpha, p, res.x);
    axpy(-alpha, ap, r);
    if (!all_finite(res.x))
      throw numeric_error("conjugate_gradient: non-finite iterate at " +
                          std::to_string(it));
    double rs_new = dot(r, r);
    res.iterations = it + 1;
    res.residual_norm = std::sqrt(rs_new);
    if (res.residual_norm < tol) break;
    double beta = rs_new / rs;
    for (std::size_t i = 0; i < n; ++i) p[i] = r[i] + beta * p[i];
    rs = rs_new;
  }
  return res;
}

}  // namespace mdrl
