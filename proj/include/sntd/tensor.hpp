// Dense tensors of runtime order with first-index-fastest storage, plus the
// mode-n algebra (matricization, folding, tensor-times-matrix) and the power
// iteration used for Lipschitz constants.
#pragma once

#include <Eigen/Dense>

#include <cassert>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace sntd {

using index_t = std::int64_t;
using Matrix = Eigen::MatrixXd;  // column-major
using Vector = Eigen::VectorXd;

constexpr int kMaxOrder = 8;

// Dimensions of a tensor. Order between 1 and kMaxOrder, every extent >= 1.
class Shape {
 public:
  Shape() = default;
  explicit Shape(std::vector<index_t> dims) : dims_(std::move(dims)) {
    if (dims_.empty() || static_cast<int>(dims_.size()) > kMaxOrder)
      throw std::invalid_argument("Shape: order must be in [1, " +
                                  std::to_string(kMaxOrder) + "]");
    for (index_t d : dims_)
      if (d < 1) throw std::invalid_argument("Shape: extents must be >= 1");
  }
  Shape(std::initializer_list<index_t> dims)
      : Shape(std::vector<index_t>(dims)) {}

  int order() const { return static_cast<int>(dims_.size()); }
  index_t dim(int n) const { return dims_[static_cast<size_t>(n)]; }
  const std::vector<index_t>& dims() const { return dims_; }

  index_t num_elements() const {
    return std::accumulate(dims_.begin(), dims_.end(), index_t{1},
                           std::multiplies<index_t>());
  }
  // product of extents below mode n (the stride of mode n)
  index_t stride(int n) const {
    index_t s = 1;
    for (int m = 0; m < n; ++m) s *= dims_[static_cast<size_t>(m)];
    return s;
  }
  // product of extents above mode n
  index_t trailing(int n) const {
    index_t s = 1;
    for (int m = n + 1; m < order(); ++m) s *= dims_[static_cast<size_t>(m)];
    return s;
  }

  bool operator==(const Shape& o) const { return dims_ == o.dims_; }
  bool operator!=(const Shape& o) const { return dims_ != o.dims_; }

 private:
  std::vector<index_t> dims_;
};

// Dense real tensor. Entry (i_0, ..., i_{N-1}) lives at linear position
// sum_n i_n * stride(n), i.e. the first index varies fastest, so vec() is the
// identity on storage and mode-0 matricization is a reshape of the buffer.
class DenseTensor {
 public:
  DenseTensor() = default;
  explicit DenseTensor(Shape shape, double fill = 0.0)
      : shape_(std::move(shape)),
        data_(static_cast<size_t>(shape_.num_elements()), fill) {}
  DenseTensor(Shape shape, std::vector<double> values)
      : shape_(std::move(shape)), data_(std::move(values)) {
    if (static_cast<index_t>(data_.size()) != shape_.num_elements())
      throw std::invalid_argument("DenseTensor: value count != element count");
  }

  const Shape& shape() const { return shape_; }
  int order() const { return shape_.order(); }
  index_t dim(int n) const { return shape_.dim(n); }
  index_t size() const { return static_cast<index_t>(data_.size()); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  double& operator[](index_t i) { return data_[static_cast<size_t>(i)]; }
  double operator[](index_t i) const { return data_[static_cast<size_t>(i)]; }

  double& at(const std::vector<index_t>& idx) {
    return data_[static_cast<size_t>(linear_index(idx))];
  }
  double at(const std::vector<index_t>& idx) const {
    return data_[static_cast<size_t>(linear_index(idx))];
  }

  index_t linear_index(const std::vector<index_t>& idx) const {
    if (static_cast<int>(idx.size()) != order())
      throw std::invalid_argument("DenseTensor: index order mismatch");
    index_t pos = 0, stride = 1;
    for (int n = 0; n < order(); ++n) {
      if (idx[static_cast<size_t>(n)] < 0 ||
          idx[static_cast<size_t>(n)] >= dim(n))
        throw std::out_of_range("DenseTensor: index out of range");
      pos += idx[static_cast<size_t>(n)] * stride;
      stride *= dim(n);
    }
    return pos;
  }

  void set_zero() { std::fill(data_.begin(), data_.end(), 0.0); }

  Eigen::Map<Vector> as_vector() {
    return Eigen::Map<Vector>(data(), size());
  }
  Eigen::Map<const Vector> as_vector() const {
    return Eigen::Map<const Vector>(data(), size());
  }

 private:
  Shape shape_;
  std::vector<double> data_;
};

inline double inner(const DenseTensor& a, const DenseTensor& b) {
  if (a.shape() != b.shape())
    throw std::invalid_argument("inner: shape mismatch");
  return a.as_vector().dot(b.as_vector());
}

inline double frob_norm_sq(const DenseTensor& x) {
  return x.as_vector().squaredNorm();
}

inline double frob_norm(const DenseTensor& x) {
  return std::sqrt(frob_norm_sq(x));
}

inline double max_abs(const DenseTensor& x) {
  return x.as_vector().cwiseAbs().maxCoeff();
}

inline double norm_l1(const DenseTensor& x) {
  return x.as_vector().cwiseAbs().sum();
}

// Mode-n matricization: row index i_n, column index
// sum_{k != n} i_k * prod_{m < k, m != n} I_m. Viewing the buffer as
// [P, I_n, Q] slabs with P = stride(n), Q = trailing(n), slab q of the
// result is the transpose of the contiguous P x I_n block.
inline Matrix matricize(const DenseTensor& x, int mode) {
  const int N = x.order();
  if (mode < 0 || mode >= N) throw std::invalid_argument("matricize: bad mode");
  const index_t In = x.dim(mode);
  const index_t P = x.shape().stride(mode);
  const index_t Q = x.shape().trailing(mode);
  Matrix out(In, P * Q);
  for (index_t q = 0; q < Q; ++q) {
    Eigen::Map<const Matrix> slab(x.data() + q * P * In, P, In);
    out.block(0, q * P, In, P) = slab.transpose();
  }
  return out;
}

// Inverse of matricize: scatter an I_n x (prod_{k != n} I_k) matrix back
// into a tensor of the given shape.
inline DenseTensor fold(const Matrix& m, int mode, const Shape& shape) {
  const int N = shape.order();
  if (mode < 0 || mode >= N) throw std::invalid_argument("fold: bad mode");
  const index_t In = shape.dim(mode);
  const index_t P = shape.stride(mode);
  const index_t Q = shape.trailing(mode);
  if (m.rows() != In || m.cols() != P * Q)
    throw std::invalid_argument("fold: matrix dimensions do not match shape");
  DenseTensor out(shape);
  for (index_t q = 0; q < Q; ++q) {
    Eigen::Map<Matrix> slab(out.data() + q * P * In, P, In);
    slab = m.block(0, q * P, In, P).transpose();
  }
  return out;
}

// Tensor-times-matrix along one mode: Y_(n) = A * X_(n); extent I_n becomes
// A.rows(). Mode 0 and the last mode collapse to a single GEMM; interior
// modes run one GEMM per trailing slab.
inline DenseTensor ttm(const DenseTensor& x, const Matrix& a, int mode) {
  const int N = x.order();
  if (mode < 0 || mode >= N) throw std::invalid_argument("ttm: bad mode");
  const index_t In = x.dim(mode);
  if (a.cols() != In)
    throw std::invalid_argument("ttm: matrix columns != tensor extent");
  const index_t R = a.rows();
  std::vector<index_t> odims = x.shape().dims();
  odims[static_cast<size_t>(mode)] = R;
  DenseTensor y{Shape(odims)};

  const index_t P = x.shape().stride(mode);
  const index_t Q = x.shape().trailing(mode);
  if (mode == 0) {
    Eigen::Map<const Matrix> xm(x.data(), In, Q);
    Eigen::Map<Matrix> ym(y.data(), R, Q);
    ym.noalias() = a * xm;
  } else {
    for (index_t q = 0; q < Q; ++q) {
      Eigen::Map<const Matrix> xs(x.data() + q * P * In, P, In);
      Eigen::Map<Matrix> ys(y.data() + q * P * R, P, R);
      ys.noalias() = xs * a.transpose();
    }
  }
  return y;
}

// Apply one matrix per mode in ascending mode order, optionally skipping one
// mode (skip < 0 applies all). mats[n] must either match mode n or be empty
// when that mode is skipped.
inline DenseTensor ttm_chain(const DenseTensor& x,
                             const std::vector<Matrix>& mats, int skip = -1) {
  if (static_cast<int>(mats.size()) != x.order())
    throw std::invalid_argument("ttm_chain: need one matrix per mode");
  DenseTensor y = x;
  for (int n = 0; n < x.order(); ++n) {
    if (n == skip) continue;
    y = ttm(y, mats[static_cast<size_t>(n)], n);
  }
  return y;
}

// Largest eigenvalue of a symmetric PSD matrix by power iteration: start from
// the normalized all-ones vector, stop when the Rayleigh quotient moves by
// less than 1e-8 relative, give up after 500 rounds and return the last value.
inline double spectral_norm_psd(const Matrix& g) {
  if (g.rows() != g.cols())
    throw std::invalid_argument("spectral_norm_psd: matrix must be square");
  assert(g.isApprox(g.transpose(), 1e-12));
  const index_t n = g.rows();
  Vector v = Vector::Constant(n, 1.0 / std::sqrt(static_cast<double>(n)));
  double lambda = 0.0;
  for (int it = 0; it < 500; ++it) {
    Vector w = g.selfadjointView<Eigen::Lower>() * v;
    const double wn = w.norm();
    if (wn == 0.0) return 0.0;  // v landed in the null space
    const double next = v.dot(w);
    if (it > 0 &&
        std::abs(next - lambda) <= 1e-8 * std::max(std::abs(next), 1e-300))
      return next;
    lambda = next;
    v = w / wn;
  }
  return lambda;
}

}  // namespace sntd
