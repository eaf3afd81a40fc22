// Sparse regularized Tucker model: the objective
//   F(C, A_1..A_N) = 1/2 || C x_1 A_1 ... x_N A_N - M ||_F^2 + penalties
// with elementwise l1 penalties (scalar or weighted on the core) and its
// block gradients. Gradients never materialize Kronecker products: the core
// gradient contracts with the small Gram matrices A_n^T A_n, the factor
// gradient works through B_n = (C x_{i != n} A_i)_(n).
#pragma once

#include "sntd/tensor.hpp"

#include <algorithm>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace sntd {

struct Regularization {
  double lambda_core = 0.0;
  std::vector<double> lambda_factor;        // per mode; empty means all zero
  std::optional<DenseTensor> core_weights;  // entrywise weights, replaces lambda_core
  bool core_signed = false;                 // drop the core >= 0 constraint
  double bound_tau = 1.0;                   // box scale used when a block is unpenalized

  double factor_lambda(int n) const {
    return lambda_factor.empty() ? 0.0
                                 : lambda_factor[static_cast<size_t>(n)];
  }
};

// Data side of an instance: the nonnegative tensor M, the target core
// dimensions, the penalties, and the constants every iteration reuses.
class Problem {
 public:
  Problem(DenseTensor data, std::vector<index_t> core_dims, Regularization reg)
      : data_(std::move(data)),
        core_shape_(std::move(core_dims)),
        reg_(std::move(reg)) {
    if (core_shape_.order() != data_.order())
      throw std::invalid_argument("Problem: core order != data order");
    for (index_t i = 0; i < data_.size(); ++i)
      if (!(data_[i] >= 0.0))
        throw std::invalid_argument(
            "Problem: data must be entrywise nonnegative and finite");
    validate_reg();
    for (int n = 0; n < order(); ++n)
      if (core_shape_.dim(n) > data_.dim(n))
        warnings_.push_back("core dimension " + std::to_string(n + 1) +
                            " exceeds data dimension (model is overcomplete)");
    data_norm_sq_ = frob_norm_sq(data_);
    data_norm_ = std::sqrt(data_norm_sq_);
    data_max_abs_ = max_abs(data_);
    bound_ = reg_.bound_tau * std::max(1.0, data_max_abs_);
  }

  const DenseTensor& data() const { return data_; }
  const Shape& core_shape() const { return core_shape_; }
  const Regularization& reg() const { return reg_; }
  int order() const { return data_.order(); }
  index_t dim(int n) const { return data_.dim(n); }
  index_t core_dim(int n) const { return core_shape_.dim(n); }

  double data_norm_sq() const { return data_norm_sq_; }
  double data_norm() const { return data_norm_; }
  double data_max_abs() const { return data_max_abs_; }
  // upper box bound b* = tau * max(1, max|M|) for unpenalized blocks
  double bound() const { return bound_; }

  bool core_is_penalized() const {
    return reg_.core_weights.has_value() || reg_.lambda_core > 0.0;
  }
  bool factor_is_penalized(int n) const { return reg_.factor_lambda(n) > 0.0; }

  const std::vector<std::string>& warnings() const { return warnings_; }

  // masked problems refresh the data tensor between iterations
  void replace_data(const DenseTensor& d) {
    if (d.shape() != data_.shape())
      throw std::invalid_argument("replace_data: shape mismatch");
    data_ = d;
    data_norm_sq_ = frob_norm_sq(data_);
    data_norm_ = std::sqrt(data_norm_sq_);
  }

 private:
  void validate_reg() {
    if (reg_.lambda_core < 0.0)
      throw std::invalid_argument("Problem: lambda_core must be >= 0");
    if (!reg_.lambda_factor.empty() &&
        static_cast<int>(reg_.lambda_factor.size()) != order())
      throw std::invalid_argument("Problem: need one factor lambda per mode");
    for (double l : reg_.lambda_factor)
      if (l < 0.0)
        throw std::invalid_argument("Problem: factor lambdas must be >= 0");
    if (reg_.core_weights) {
      if (reg_.lambda_core > 0.0)
        throw std::invalid_argument(
            "Problem: weighted core penalty excludes lambda_core");
      if (reg_.core_weights->shape() != core_shape_)
        throw std::invalid_argument(
            "Problem: core weights must match core dimensions");
      for (index_t i = 0; i < reg_.core_weights->size(); ++i)
        if (!((*reg_.core_weights)[i] >= 0.0))
          throw std::invalid_argument("Problem: core weights must be >= 0");
    }
    if (reg_.bound_tau < 1.0)
      throw std::invalid_argument("Problem: bound_tau must be >= 1");
  }

  DenseTensor data_;
  Shape core_shape_;
  Regularization reg_;
  double data_norm_sq_ = 0.0, data_norm_ = 0.0, data_max_abs_ = 0.0,
         bound_ = 1.0;
  std::vector<std::string> warnings_;
};

// Core plus one factor per mode. Every block write bumps that block's
// version counter so cached byproducts can prove they are still current.
class TuckerModel {
 public:
  TuckerModel() = default;
  TuckerModel(DenseTensor core, std::vector<Matrix> factors)
      : core_(std::move(core)), factors_(std::move(factors)) {
    if (static_cast<int>(factors_.size()) != core_.order())
      throw std::invalid_argument("TuckerModel: need one factor per mode");
    for (int n = 0; n < core_.order(); ++n)
      if (factors_[static_cast<size_t>(n)].cols() != core_.dim(n))
        throw std::invalid_argument(
            "TuckerModel: factor columns must match core dimension");
    versions_.assign(factors_.size() + 1, 0);
  }

  int order() const { return core_.order(); }
  const DenseTensor& core() const { return core_; }
  const Matrix& factor(int n) const { return factors_[static_cast<size_t>(n)]; }
  const std::vector<Matrix>& factors() const { return factors_; }

  void set_core(DenseTensor c) {
    if (c.shape() != core_.shape())
      throw std::invalid_argument("set_core: shape mismatch");
    core_ = std::move(c);
    ++versions_[0];
  }
  void set_factor(int n, Matrix a) {
    Matrix& cur = factors_[static_cast<size_t>(n)];
    if (a.rows() != cur.rows() || a.cols() != cur.cols())
      throw std::invalid_argument("set_factor: shape mismatch");
    cur = std::move(a);
    ++versions_[static_cast<size_t>(n) + 1];
  }

  // block 0 is the core, block n+1 is factor n
  std::uint64_t version(int block) const {
    return versions_[static_cast<size_t>(block)];
  }
  const std::vector<std::uint64_t>& version_snapshot() const {
    return versions_;
  }

 private:
  DenseTensor core_;
  std::vector<Matrix> factors_;
  std::vector<std::uint64_t> versions_;
};

inline DenseTensor reconstruct(const TuckerModel& w) {
  return ttm_chain(w.core(), w.factors());
}

// ---- gradient building blocks -------------------------------------------

inline Matrix gram(const Matrix& a) {
  Matrix g = a.transpose() * a;
  g.triangularView<Eigen::StrictlyUpper>() = g.transpose();  // exact symmetry
  return g;
}

// M x_1 A_1^T ... x_N A_N^T (ascending; every step shrinks the tensor)
inline DenseTensor data_proj(const DenseTensor& data,
                             const std::vector<Matrix>& factors) {
  DenseTensor y = data;
  for (int n = 0; n < data.order(); ++n)
    y = ttm(y, factors[static_cast<size_t>(n)].transpose(), n);
  return y;
}

// C x_1 G_1 ... x_N G_N with G_n = A_n^T A_n
inline DenseTensor core_times_grams(const DenseTensor& core,
                                    const std::vector<Matrix>& grams) {
  return ttm_chain(core, grams);
}

// B_n = (C x_{i != n} A_i)_(n). The expansion modes are applied cheapest
// growth first (ascending I_i / R_i) to keep intermediates small; mode order
// does not change the value.
inline Matrix factor_b(const DenseTensor& core,
                       const std::vector<Matrix>& factors, int mode) {
  const int N = core.order();
  std::vector<int> order_modes;
  order_modes.reserve(static_cast<size_t>(N) - 1);
  for (int i = 0; i < N; ++i)
    if (i != mode) order_modes.push_back(i);
  std::stable_sort(order_modes.begin(), order_modes.end(), [&](int a, int b) {
    const double ra = static_cast<double>(factors[static_cast<size_t>(a)].rows()) /
                      static_cast<double>(factors[static_cast<size_t>(a)].cols());
    const double rb = static_cast<double>(factors[static_cast<size_t>(b)].rows()) /
                      static_cast<double>(factors[static_cast<size_t>(b)].cols());
    return ra < rb;
  });
  DenseTensor y = core;
  for (int i : order_modes) y = ttm(y, factors[static_cast<size_t>(i)], i);
  return matricize(y, mode);
}

// ---- spec-level operations -----------------------------------------------

struct CoreByproducts {
  std::vector<Matrix> grams;  // A_n^T A_n per mode
  DenseTensor proj;           // M x_n A_n^T over all modes
  std::vector<std::uint64_t> versions;
};

struct FactorByproducts {
  int mode = -1;
  Matrix bbt;  // B_n B_n^T
  Matrix mbt;  // M_(n) B_n^T
  std::vector<std::uint64_t> versions;
};

// gradient of the data-fit term with respect to the core, evaluated at
// at_core while the factors come from w
inline DenseTensor grad_core(const TuckerModel& w, const DenseTensor& at_core,
                             const Problem& p, CoreByproducts* out = nullptr) {
  std::vector<Matrix> grams;
  grams.reserve(static_cast<size_t>(w.order()));
  for (int n = 0; n < w.order(); ++n) grams.push_back(gram(w.factor(n)));
  DenseTensor proj = data_proj(p.data(), w.factors());
  DenseTensor g = core_times_grams(at_core, grams);
  g.as_vector() -= proj.as_vector();
  if (out) *out = CoreByproducts{std::move(grams), std::move(proj),
                                 w.version_snapshot()};
  return g;
}

// gradient with respect to factor `mode`, evaluated at at_factor; core and
// the other factors come from w
inline Matrix grad_factor(const TuckerModel& w, int mode,
                          const Matrix& at_factor, const Problem& p,
                          FactorByproducts* out = nullptr) {
  Matrix b = factor_b(w.core(), w.factors(), mode);
  Matrix bbt = b * b.transpose();
  bbt.triangularView<Eigen::StrictlyUpper>() = bbt.transpose();
  Matrix mbt = matricize(p.data(), mode) * b.transpose();
  Matrix g = at_factor * bbt - mbt;
  if (out)
    *out = FactorByproducts{mode, std::move(bbt), std::move(mbt),
                            w.version_snapshot()};
  return g;
}

// 1/2 ||recon - M||^2 through the inner-product expansion
//   1/2 ( <A_n^T A_n, B_n B_n^T> - 2 <A_n, M_(n) B_n^T> + ||M||^2 )
// reusing the byproducts of the latest grad_factor call. Valid only while no
// block other than factor `mode` has been rewritten since.
inline double data_fit(const TuckerModel& w, const Problem& p,
                       const FactorByproducts& bp) {
  const std::vector<std::uint64_t>& now = w.version_snapshot();
  for (size_t b = 0; b < now.size(); ++b) {
    if (static_cast<int>(b) == bp.mode + 1) continue;
    if (now[b] != bp.versions[b])
      throw std::logic_error(
          "data_fit: byproducts are stale (a block other than the byproduct's "
          "factor changed)");
  }
  const Matrix& a = w.factor(bp.mode);
  const double quad = gram(a).cwiseProduct(bp.bbt).sum();
  const double cross = a.cwiseProduct(bp.mbt).sum();
  return 0.5 * (quad - 2.0 * cross + p.data_norm_sq());
}

// same quantity by direct reconstruction (initialization, tests)
inline double data_fit_direct(const TuckerModel& w, const Problem& p) {
  DenseTensor r = reconstruct(w);
  r.as_vector() -= p.data().as_vector();
  return 0.5 * frob_norm_sq(r);
}

inline double penalty_value(const Regularization& reg, const TuckerModel& w) {
  double v = 0.0;
  if (reg.core_weights)
    v += reg.core_weights->as_vector()
             .cwiseProduct(w.core().as_vector().cwiseAbs())
             .sum();
  else if (reg.lambda_core > 0.0)
    v += reg.lambda_core * norm_l1(w.core());
  for (int n = 0; n < w.order(); ++n) {
    const double l = reg.factor_lambda(n);
    if (l > 0.0) v += l * w.factor(n).cwiseAbs().sum();
  }
  return v;
}

// F = data fit + penalties, with the fit supplied by the caller so the
// cheap byproduct path can feed it
inline double objective(const TuckerModel& w, const Problem& p, double fit) {
  return fit + penalty_value(p.reg(), w);
}

inline double relative_error(const TuckerModel& w, const Problem& p) {
  DenseTensor r = reconstruct(w);
  r.as_vector() -= p.data().as_vector();
  return frob_norm(r) / p.data_norm();
}

// ||recon - M|| / ||M|| recovered from the data-fit value; clamps the tiny
// negative values cancellation can produce near an exact fit
inline double relative_error_from_fit(double fit, double data_norm) {
  return std::sqrt(std::max(0.0, 2.0 * fit)) / data_norm;
}

}  // namespace sntd
