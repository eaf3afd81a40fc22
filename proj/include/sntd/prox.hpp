// Elementwise proximal steps shared by the solvers: nonnegative soft
// thresholding (optionally boxed), signed soft thresholding, weighted
// variants, and the Euclidean projection onto the unit ball. Thresholding is
// written so that killed entries come out as exact +0.0.
#pragma once

#include "sntd/model.hpp"
#include "sntd/tensor.hpp"

#include <cassert>
#include <cmath>
#include <optional>

namespace sntd {

inline double soft_threshold(double x, double mu) {
  if (x > mu) return x - mu;
  if (x < -mu) return x + mu;
  return 0.0;
}

namespace detail {

// out = max(0, hat - grad/L - thresh/L), then min(bound, .) if bounded.
// thresh is either a scalar or one weight per entry.
inline void prox_nonneg(const double* hat, const double* grad, double inv_l,
                        double lambda, const double* weights, bool bounded,
                        double bound, double* out, index_t n) {
  for (index_t i = 0; i < n; ++i) {
    const double mu = (weights ? weights[i] : lambda) * inv_l;
    double v = hat[i] - grad[i] * inv_l - mu;
    v = v > 0.0 ? v : 0.0;
    if (bounded && v > bound) v = bound;
    out[i] = v;
  }
}

// out = shrink(hat - grad/L, thresh/L), sign kept
inline void prox_signed(const double* hat, const double* grad, double inv_l,
                        double lambda, const double* weights, double* out,
                        index_t n) {
  for (index_t i = 0; i < n; ++i) {
    const double mu = (weights ? weights[i] : lambda) * inv_l;
    out[i] = soft_threshold(hat[i] - grad[i] * inv_l, mu);
  }
}

}  // namespace detail

// One prox-gradient step for a block held as a matrix.
inline Matrix prox_block(const Matrix& hat, const Matrix& grad, double l,
                         double lambda, bool signed_block = false,
                         std::optional<double> bound = std::nullopt) {
  assert(l > 0.0 && lambda >= 0.0);
  Matrix out(hat.rows(), hat.cols());
  if (signed_block)
    detail::prox_signed(hat.data(), grad.data(), 1.0 / l, lambda, nullptr,
                        out.data(), hat.size());
  else
    detail::prox_nonneg(hat.data(), grad.data(), 1.0 / l, lambda, nullptr,
                        bound.has_value(), bound.value_or(0.0), out.data(),
                        hat.size());
  return out;
}

// Same step for the core tensor; the weighted penalty, when present,
// replaces the scalar lambda entry by entry.
inline DenseTensor core_prox_step(const DenseTensor& hat,
                                  const DenseTensor& grad, double l,
                                  const Regularization& reg,
                                  std::optional<double> bound = std::nullopt) {
  assert(l > 0.0);
  DenseTensor out(hat.shape());
  const double* w = reg.core_weights ? reg.core_weights->data() : nullptr;
  if (reg.core_signed)
    detail::prox_signed(hat.data(), grad.data(), 1.0 / l, reg.lambda_core, w,
                        out.data(), hat.size());
  else
    detail::prox_nonneg(hat.data(), grad.data(), 1.0 / l, reg.lambda_core, w,
                        bound.has_value(), bound.value_or(0.0), out.data(),
                        hat.size());
  return out;
}

// Projection onto {v : ||v||_2 <= 1}. The repeat guard absorbs the one-ulp
// overshoot division can leave so the returned norm is never above 1.
inline Vector project_unit_ball(const Vector& v) {
  Vector w = v;
  double n = w.norm();
  while (n > 1.0) {
    w /= n;
    n = w.norm();
  }
  return w;
}

}  // namespace sntd
