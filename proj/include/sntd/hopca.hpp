// Relaxed sparse higher-order PCA: Tucker fitting with signed blocks, l1
// penalties, factor columns confined to the unit Euclidean ball, and a
// pairwise-squared-inner-product penalty (mu/2) sum_n sum_{i<j} (a_i' a_j)^2
// promoting orthogonality. The loop cycles core, A_1, core, A_2, ..., with
// each factor updated one column at a time; the same pair-level objective
// guard as the variant-II solver redoes a pair with zero weights if the
// objective rose.
#pragma once

#include "sntd/model.hpp"
#include "sntd/prox.hpp"
#include "sntd/rng.hpp"
#include "sntd/solver.hpp"
#include "sntd/tensor.hpp"

#include <cmath>
#include <stdexcept>
#include <utility>
#include <vector>

namespace sntd {

class HopcaProblem {
 public:
  HopcaProblem(DenseTensor data, std::vector<index_t> core_dims,
               Regularization reg, double mu)
      : data_(std::move(data)),
        core_shape_(std::move(core_dims)),
        reg_(std::move(reg)),
        mu_(mu) {
    if (core_shape_.order() != data_.order())
      throw std::invalid_argument("HopcaProblem: core order != data order");
    if (!(mu_ >= 0.0))
      throw std::invalid_argument("HopcaProblem: mu must be >= 0");
    if (reg_.lambda_core < 0.0)
      throw std::invalid_argument("HopcaProblem: lambda_core must be >= 0");
    if (!reg_.lambda_factor.empty() &&
        static_cast<int>(reg_.lambda_factor.size()) != data_.order())
      throw std::invalid_argument("HopcaProblem: one factor lambda per mode");
    for (double l : reg_.lambda_factor)
      if (l < 0.0)
        throw std::invalid_argument("HopcaProblem: lambdas must be >= 0");
    for (index_t i = 0; i < data_.size(); ++i)
      if (!std::isfinite(data_[i]))
        throw std::invalid_argument("HopcaProblem: data must be finite");
    reg_.core_signed = true;  // the core update is the signed soft threshold
    data_norm_sq_ = frob_norm_sq(data_);
    data_norm_ = std::sqrt(data_norm_sq_);
  }

  const DenseTensor& data() const { return data_; }
  const Shape& core_shape() const { return core_shape_; }
  const Regularization& reg() const { return reg_; }
  double mu() const { return mu_; }
  int order() const { return data_.order(); }
  double data_norm_sq() const { return data_norm_sq_; }
  double data_norm() const { return data_norm_; }

 private:
  DenseTensor data_;
  Shape core_shape_;
  Regularization reg_;
  double mu_ = 0.0;
  double data_norm_sq_ = 0.0, data_norm_ = 0.0;
};

// the signed/weighted core step is the same kernel the main solver uses; the
// name here mirrors the four-way dispatch it performs
inline DenseTensor update_core_signed(const DenseTensor& hat,
                                      const DenseTensor& grad, double l,
                                      const Regularization& reg) {
  return core_prox_step(hat, grad, l, reg, std::nullopt);
}

inline void soft_threshold_inplace(Vector& v, double mu) {
  for (index_t i = 0; i < v.size(); ++i) v[i] = soft_threshold(v[i], mu);
}

// Closed-form column update: minimize over the unit ball
//   (b/2)||a||^2 + <r, a> + lambda ||a||_1
//   + mu ( <G a_hat, a - a_hat> + (L/2) ||a - a_hat||^2 )
// where b is the squared norm of the column's B-row, r the residual term,
// G = others * others', and L = ||G||. When b + mu L = 0 the objective does
// not depend on the column and it is left unchanged.
inline Vector update_factor_column(const Vector& hat, const Vector& r,
                                   double b, const Matrix& others, double l,
                                   double mu, double lambda) {
  const double denom = b + mu * l;
  if (!(denom > 0.0)) return hat;
  Vector z = (mu * l) * hat - r;
  if (others.cols() > 0)
    z.noalias() -= mu * (others * (others.transpose() * hat));
  z /= denom;
  soft_threshold_inplace(z, lambda / denom);
  return project_unit_ball(z);
}

// (mu/2) sum_n sum_{i<j} (a_{n,i}' a_{n,j})^2 from the factor Grams
inline double ortho_penalty_value(const std::vector<Matrix>& grams,
                                  double mu) {
  double s = 0.0;
  for (const Matrix& g : grams)
    for (index_t j = 1; j < g.cols(); ++j)
      for (index_t i = 0; i < j; ++i) s += g(i, j) * g(i, j);
  return 0.5 * mu * s;
}

// ||A'A - I||_F / ||I||_F after normalizing each nonzero column
inline double orthogonality_residual(const Matrix& a) {
  Matrix u = a;
  for (index_t j = 0; j < u.cols(); ++j) {
    const double n = u.col(j).norm();
    if (n > 0.0) u.col(j) /= n;
  }
  Matrix g = u.transpose() * u;
  g.diagonal().array() -= 1.0;
  return g.norm() / std::sqrt(static_cast<double>(a.cols()));
}

namespace detail {

class HopcaEngine {
 public:
  HopcaEngine(const HopcaProblem& hp, TuckerModel init,
              const SolverOptions& opt)
      : hp_(hp), w_(std::move(init)), opt_(opt) {
    check_options(opt_);
    N_ = hp_.order();
    if (w_.order() != N_)
      throw std::invalid_argument("solve_hopca: init order != problem order");
    if (w_.core().shape() != hp_.core_shape())
      throw std::invalid_argument("solve_hopca: init core dims != requested");
    for (int n = 0; n < N_; ++n)
      if (w_.factor(n).rows() != hp_.data().dim(n))
        throw std::invalid_argument("solve_hopca: init factor rows mismatch");
    // the loop assumes every column starts inside the unit ball
    for (int n = 0; n < N_; ++n) {
      Matrix a = w_.factor(n);
      bool moved = false;
      for (index_t j = 0; j < a.cols(); ++j)
        if (a.col(j).norm() > 1.0) {
          a.col(j) = project_unit_ball(a.col(j));
          moved = true;
        }
      if (moved) w_.set_factor(n, a);
    }

    core_prev_ = w_.core();
    factors_prev_ = w_.factors();
    lc_prev_ = opt_.l_min;
    lcol_prev_.resize(static_cast<size_t>(N_));
    for (int n = 0; n < N_; ++n)
      lcol_prev_[static_cast<size_t>(n)].assign(
          static_cast<size_t>(w_.factor(n).cols()), opt_.l_min);
    grams_.resize(static_cast<size_t>(N_));
    gram_norms_.assign(static_cast<size_t>(N_), 0.0);
    gram_ver_.assign(static_cast<size_t>(N_), ~std::uint64_t{0});
  }

  SolveResult run() {
    const auto t0 = std::chrono::steady_clock::now();
    auto elapsed = [&] {
      return std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                           t0)
          .count();
    };

    f_prev_ = objective_direct();
    if (!std::isfinite(f_prev_))
      throw NumericalError("objective is not finite at the initial point");

    IterateTrace trace;
    int flat_hits = 0;
    StopReason stop = StopReason::MAX_ITERS;

    for (iter_ = 1;; ++iter_) {
      if (iter_ > opt_.max_iters) {
        stop = StopReason::MAX_ITERS;
        break;
      }
      if (elapsed() >= opt_.max_seconds) {
        stop = StopReason::TIME_BUDGET;
        break;
      }

      TraceRow row;
      row.iter = iter_;
      const bool fista = opt_.extrapolation == Extrapolation::FISTA;
      const double omega_hat = fista ? shared_seq_.advance() : 0.0;

      double fit = 0.0, objective_now = 0.0, f_running = f_prev_;
      for (int n = 0; n < N_; ++n) {
        run_pair(n, omega_hat, /*allow_extrap=*/true, row, fit, objective_now);
        if (objective_now > f_running) {
          ++row.redo;
          w_.set_core(core_prev_);
          w_.set_factor(n, factors_prev_[static_cast<size_t>(n)]);
          row.block_l.resize(row.block_l.size() - 2);
          row.block_omega.resize(row.block_omega.size() - 2);
          run_pair(n, 0.0, /*allow_extrap=*/false, row, fit, objective_now);
        }
        f_running = objective_now;
      }

      if (!std::isfinite(objective_now))
        throw NumericalError("objective became non-finite at iteration " +
                             std::to_string(iter_));

      row.seconds = elapsed();
      row.objective = objective_now;
      row.data_fit = fit;
      row.rel_err = hp_.data_norm() > 0.0
                        ? relative_error_from_fit(fit, hp_.data_norm())
                        : 0.0;
      const Density d = density(w_);
      row.core_density = d.core;
      row.factor_density = d.factors;
      for (int n = 0; n < N_; ++n)
        row.ortho_residual.push_back(orthogonality_residual(w_.factor(n)));
      trace.total_redo += row.redo;

      const double flat =
          std::abs(f_prev_ - objective_now) / (1.0 + std::abs(f_prev_));
      if (row.redo > 0)
        flat_hits = 0;
      else if (flat <= opt_.tol)
        ++flat_hits;
      else
        flat_hits = 0;

      f_prev_ = objective_now;
      const double rel_err = row.rel_err;
      trace.rows.push_back(std::move(row));

      if (rel_err <= opt_.tol) {
        stop = StopReason::REL_ERR;
        break;
      }
      if (flat_hits >= opt_.objective_decrease_window) {
        stop = StopReason::OBJECTIVE_FLAT;
        break;
      }
    }

    trace.stop = stop;
    return SolveResult{std::move(w_), std::move(trace), std::nullopt};
  }

 private:
  double objective_direct() {
    DenseTensor r = reconstruct(w_);
    r.as_vector() -= hp_.data().as_vector();
    double v = 0.5 * frob_norm_sq(r) + penalty_value(hp_.reg(), w_);
    std::vector<Matrix> grams;
    for (int n = 0; n < N_; ++n) grams.push_back(gram(w_.factor(n)));
    return v + ortho_penalty_value(grams, hp_.mu());
  }

  void ensure_gram(int n) {
    const size_t i = static_cast<size_t>(n);
    if (gram_ver_[i] == w_.version(n + 1)) return;
    grams_[i] = gram(w_.factor(n));
    gram_norms_[i] = spectral_norm_psd(grams_[i]);
    gram_ver_[i] = w_.version(n + 1);
  }

  double maybe_override(double omega, int block, int pair) {
    if (opt_.omega_override) {
      const double o = opt_.omega_override(iter_, block, pair);
      if (o >= 0.0) return o;
    }
    return omega;
  }

  void run_pair(int n, double omega_hat_shared, bool allow_extrap,
                TraceRow& row, double& fit, double& objective_now) {
    const bool fista =
        allow_extrap && opt_.extrapolation == Extrapolation::FISTA;

    // core: signed soft-threshold step with its own extrapolation sequence
    for (int m = 0; m < N_; ++m) ensure_gram(m);
    double prod = 1.0;
    for (int m = 0; m < N_; ++m) prod *= gram_norms_[static_cast<size_t>(m)];
    const double lc = std::max(opt_.l_min, prod);
    const double omega_hat_c = fista ? core_seq_.advance() : 0.0;
    double omega_c =
        fista ? fista_weight(omega_hat_c, lc_prev_, lc, opt_.delta_omega, false)
              : 0.0;
    omega_c = maybe_override(omega_c, 0, n);

    DenseTensor old_core = w_.core();
    DenseTensor hat = old_core;
    if (omega_c != 0.0)
      hat.as_vector() +=
          omega_c * (old_core.as_vector() - core_prev_.as_vector());
    DenseTensor grad = core_times_grams(hat, grams_);
    grad.as_vector() -= data_proj(hp_.data(), w_.factors()).as_vector();
    w_.set_core(update_core_signed(hat, grad, lc, hp_.reg()));
    core_prev_ = std::move(old_core);
    lc_prev_ = lc;
    row.block_l.push_back(lc);
    row.block_omega.push_back(omega_c);

    // factor n, column by column against fixed B-row data
    Matrix b = factor_b(w_.core(), w_.factors(), n);
    Matrix bbt = b * b.transpose();
    bbt.triangularView<Eigen::StrictlyUpper>() = bbt.transpose();
    Matrix mbt = matricize(hp_.data(), n) * b.transpose();

    Matrix a = w_.factor(n);        // columns replaced in turn (mixed state)
    const Matrix a_prev = a;        // values entering this outer iteration
    const Matrix& a_prevprev = factors_prev_[static_cast<size_t>(n)];
    const index_t R = a.cols();
    const double lambda_n = hp_.reg().factor_lambda(n);
    double col_l_sum = 0.0, col_omega_sum = 0.0;

    for (index_t j = 0; j < R; ++j) {
      Matrix others(a.rows(), R - 1);
      for (index_t i = 0, c = 0; i < R; ++i)
        if (i != j) others.col(c++) = a.col(i);
      double l;
      if (others.cols() == 0)
        l = opt_.l_min;  // degenerate single-column factor
      else
        l = spectral_norm_psd(gram(others));

      Vector bb_others(R - 1);
      for (index_t i = 0, c = 0; i < R; ++i)
        if (i != j) bb_others[c++] = bbt(i, j);
      Vector r = -mbt.col(j);
      if (others.cols() > 0) r.noalias() += others * bb_others;

      double omega =
          fista ? fista_weight(omega_hat_shared,
                               lcol_prev_[static_cast<size_t>(n)]
                                         [static_cast<size_t>(j)],
                               l, opt_.delta_omega, false)
                : 0.0;
      omega = maybe_override(omega, n + 1, n);

      Vector hat_col = a_prev.col(j);
      if (omega != 0.0)
        hat_col += omega * (a_prev.col(j) - a_prevprev.col(j));

      a.col(j) = update_factor_column(hat_col, r, bbt(j, j), others, l,
                                      hp_.mu(), lambda_n);
      lcol_prev_[static_cast<size_t>(n)][static_cast<size_t>(j)] = l;
      col_l_sum += l;
      col_omega_sum += omega;
    }

    factors_prev_[static_cast<size_t>(n)] = a_prev;
    w_.set_factor(n, a);
    ensure_gram(n);
    fit = 0.5 * (grams_[static_cast<size_t>(n)].cwiseProduct(bbt).sum() -
                 2.0 * a.cwiseProduct(mbt).sum() + hp_.data_norm_sq());
    for (int m = 0; m < N_; ++m) ensure_gram(m);
    objective_now = fit + penalty_value(hp_.reg(), w_) +
                    ortho_penalty_value(grams_, hp_.mu());
    // one summary entry per factor: mean column L and weight
    row.block_l.push_back(col_l_sum / static_cast<double>(R));
    row.block_omega.push_back(col_omega_sum / static_cast<double>(R));
  }

  const HopcaProblem& hp_;
  TuckerModel w_;
  SolverOptions opt_;
  int N_ = 0;
  int iter_ = 0;

  DenseTensor core_prev_;
  std::vector<Matrix> factors_prev_;
  FistaSequence shared_seq_, core_seq_;
  double lc_prev_ = 1.0;
  std::vector<std::vector<double>> lcol_prev_;

  std::vector<Matrix> grams_;
  std::vector<double> gram_norms_;
  std::vector<std::uint64_t> gram_ver_;

  double f_prev_ = 0.0;
};

}  // namespace detail

inline SolveResult solve_hopca(const HopcaProblem& hp, TuckerModel init,
                               const SolverOptions& opt) {
  detail::HopcaEngine eng(hp, std::move(init), opt);
  return eng.run();
}

// Initializer for signed data: random uniform factors refined by one sweep of
// leading singular vectors (no nonnegative clipping), columns projected into
// the unit ball, core set to the projected data.
inline TuckerModel init_hopca(const HopcaProblem& hp, std::uint64_t seed) {
  const int N = hp.order();
  std::vector<Matrix> a;
  a.reserve(static_cast<size_t>(N));
  for (int n = 0; n < N; ++n) {
    Rng rng = Rng::substream(seed, static_cast<std::uint64_t>(n) + 1);
    Matrix m(hp.data().dim(n), hp.core_shape().dim(n));
    for (index_t j = 0; j < m.cols(); ++j)
      for (index_t i = 0; i < m.rows(); ++i) m(i, j) = rng.uniform01();
    a.push_back(std::move(m));
  }
  for (int n = 0; n < N; ++n) {
    DenseTensor b = hp.data();
    for (int i = 0; i < N; ++i)
      if (i != n) b = ttm(b, a[static_cast<size_t>(i)].transpose(), i);
    Matrix bn = matricize(b, n);
    if (bn.norm() == 0.0) continue;
    Eigen::BDCSVD<Matrix> svd(bn, Eigen::ComputeThinU);
    const index_t k =
        std::min<index_t>(hp.core_shape().dim(n), svd.matrixU().cols());
    a[static_cast<size_t>(n)].leftCols(k) = svd.matrixU().leftCols(k);
  }
  for (Matrix& m : a)
    for (index_t j = 0; j < m.cols(); ++j)
      m.col(j) = project_unit_ball(m.col(j));
  DenseTensor core = data_proj(hp.data(), a);
  return TuckerModel(std::move(core), std::move(a));
}

}  // namespace sntd
