#pragma once

#include <cmath>
#include <functional>

#include "daf/tensor.hpp"

namespace daf {

/// Central-difference gradient estimate of a deterministic scalar function,
/// computed entirely in double precision:
///   g_i = (f(x + eps*e_i) - f(x - eps*e_i)) / (2*eps)
/// Independent of the tape: it only evaluates f at shifted points.
inline TensorD finite_diff_grad(const std::function<double(const TensorD&)>& f, TensorD x, double eps) {
  if (!(eps > 0.0)) throw std::invalid_argument("finite_diff_grad needs eps > 0");
  TensorD g(x.shape);
  for (std::size_t i = 0; i < x.data.size(); ++i) {
    const double orig = x.data[i];
    x.data[i] = orig + eps;
    const double fp = f(x);
    x.data[i] = orig - eps;
    const double fm = f(x);
    x.data[i] = orig;
    g.data[i] = (fp - fm) / (2.0 * eps);
  }
  return g;
}

/// Largest relative error between two gradients. Entries where both sides are
/// below `atol` count as zero error (finite differences bottom out around
/// 1e-11 in double).
inline double max_rel_err(const TensorD& a, const TensorD& b, double atol = 1e-7) {
  if (!a.same_shape(b)) throw std::invalid_argument("max_rel_err shape mismatch");
  double worst = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    const double x = a.data[i], y = b.data[i];
    const double mag = std::max(std::abs(x), std::abs(y));
    if (mag < atol) continue;
    worst = std::max(worst, std::abs(x - y) / mag);
  }
  return worst;
}

}  // namespace daf
