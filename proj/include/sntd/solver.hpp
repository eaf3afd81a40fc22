// Alternating proximal-gradient solvers for the sparse nonnegative Tucker
// objective. Two update schedules are provided: variant I updates the core
// once per outer iteration and then every factor; variant II re-updates the
// core before each factor (pairs). Both extrapolate blocks with FISTA-style
// weights capped by the Lipschitz ratio of consecutive steps, and both guard
// monotonicity by redoing a sweep (variant I) or a core/factor pair
// (variant II) with zero weights whenever the objective rose.
#pragma once

#include "sntd/model.hpp"
#include "sntd/prox.hpp"
#include "sntd/rng.hpp"
#include "sntd/tensor.hpp"

#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace sntd {

enum class SolverVariant { APG_I, APG_II };
enum class Extrapolation { FISTA, NONE };
enum class StopReason { REL_ERR, OBJECTIVE_FLAT, MAX_ITERS, TIME_BUDGET };

inline const char* to_string(StopReason r) {
  switch (r) {
    case StopReason::REL_ERR: return "rel_err";
    case StopReason::OBJECTIVE_FLAT: return "objective_flat";
    case StopReason::MAX_ITERS: return "max_iters";
    case StopReason::TIME_BUDGET: return "time_budget";
  }
  return "?";
}

// thrown when an objective evaluation goes non-finite
struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct SolverOptions {
  SolverVariant variant = SolverVariant::APG_I;
  double l_min = 1.0;           // floor for every Lipschitz constant
  double delta_omega = 0.9999;  // safety factor inside the weight cap
  double tol = 1e-4;
  int max_iters = 500;
  double max_seconds = std::numeric_limits<double>::infinity();
  int objective_decrease_window = 3;  // consecutive flat hits that stop
  std::uint64_t rng_seed = 0;
  Extrapolation extrapolation = Extrapolation::FISTA;
  // test hook: return a replacement weight (>= 0) or negative to keep the
  // computed one; block 0 is the core, block n+1 is factor n, pair is the
  // 0-based pair index under variant II (-1 otherwise)
  std::function<double(int iter, int block, int pair)> omega_override;
};

struct TraceRow {
  int iter = 0;
  double seconds = 0.0;
  double objective = 0.0;
  double data_fit = 0.0;
  double rel_err = 0.0;
  int redo = 0;  // sweeps (variant I) or pairs (variant II) redone this iteration
  std::vector<double> block_l;      // Lipschitz constants in update order
  std::vector<double> block_omega;  // applied weights, same layout
  double core_density = 0.0;
  double factor_density = 0.0;
  std::vector<double> ortho_residual;  // per factor; orthogonal-PCA runs only
};

struct IterateTrace {
  std::vector<TraceRow> rows;
  StopReason stop = StopReason::MAX_ITERS;
  int total_redo = 0;
};

struct SolveResult {
  TuckerModel model;
  IterateTrace trace;
  std::optional<DenseTensor> completion;  // masked runs: final X
};

// t^0 = 1, t^k = (1 + sqrt(1 + 4 t_{k-1}^2)) / 2; advance() returns
// omega_hat^k = (t^{k-1} - 1) / t^k
class FistaSequence {
 public:
  double advance() {
    const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t_ * t_));
    const double w = (t_ - 1.0) / t_next;
    t_ = t_next;
    return w;
  }
  double t() const { return t_; }

 private:
  double t_ = 1.0;
};

// applied weight: min(omega_hat, delta * sqrt(l_prev / l_cur)), optionally
// also capped at 1 (the variant-I core uses that extra cap)
inline double fista_weight(double omega_hat, double l_prev, double l_cur,
                           double delta, bool cap_at_one) {
  // the cap enforces omega^2 * l_cur <= delta^2 * l_prev, vacuous at l_cur = 0
  double w = l_cur > 0.0
                 ? std::min(omega_hat, delta * std::sqrt(l_prev / l_cur))
                 : omega_hat;
  if (cap_at_one) w = std::min(w, 1.0);
  return w;
}

// L for the core step: product over modes of ||A_n^T A_n||, floored at l_min
inline double lipschitz_core(const std::vector<Matrix>& factors,
                             double l_min) {
  double prod = 1.0;
  for (const Matrix& a : factors) prod *= spectral_norm_psd(gram(a));
  return std::max(l_min, prod);
}

// L for a factor step: ||B_n B_n^T||, floored at l_min
inline double lipschitz_factor(const Matrix& bbt, double l_min) {
  return std::max(l_min, spectral_norm_psd(bbt));
}

// fraction of entries that are not exact zeros
inline double density_of(const double* x, index_t n) {
  index_t nz = 0;
  for (index_t i = 0; i < n; ++i) nz += (x[i] != 0.0);
  return static_cast<double>(nz) / static_cast<double>(n);
}

struct Density {
  double core = 1.0;
  double factors = 1.0;  // pooled over all factor entries
};

inline Density density(const TuckerModel& w) {
  Density d;
  d.core = density_of(w.core().data(), w.core().size());
  index_t nz = 0, total = 0;
  for (int n = 0; n < w.order(); ++n) {
    const Matrix& a = w.factor(n);
    for (index_t i = 0; i < a.size(); ++i) nz += (a.data()[i] != 0.0);
    total += a.size();
  }
  d.factors = static_cast<double>(nz) / static_cast<double>(total);
  return d;
}

namespace detail {

struct MaskedSpec {
  const DenseTensor* observed;  // P_Omega(M): zeros off the mask
  const DenseTensor* mask;      // exact 0/1 entries
  double observed_norm;         // ||P_Omega(M)||_F
};

inline void check_options(const SolverOptions& o) {
  if (!(o.l_min > 0.0))
    throw std::invalid_argument("SolverOptions: l_min must be > 0");
  if (!(o.delta_omega > 0.0 && o.delta_omega < 1.0))
    throw std::invalid_argument("SolverOptions: delta_omega must be in (0,1)");
  if (!(o.tol >= 0.0))
    throw std::invalid_argument("SolverOptions: tol must be >= 0");
  if (o.max_iters < 0)
    throw std::invalid_argument("SolverOptions: max_iters must be >= 0");
  if (!(o.max_seconds >= 0.0))
    throw std::invalid_argument("SolverOptions: max_seconds must be >= 0");
  if (o.objective_decrease_window < 1)
    throw std::invalid_argument(
        "SolverOptions: objective_decrease_window must be >= 1");
}

class ApgEngine {
 public:
  ApgEngine(const Problem& p, TuckerModel init, const SolverOptions& opt,
            const MaskedSpec* masked)
      : p_(p), w_(std::move(init)), opt_(opt), masked_(masked) {
    check_options(opt_);
    N_ = p_.order();
    if (w_.order() != N_)
      throw std::invalid_argument("solve: init order != problem order");
    if (w_.core().shape() != p_.core_shape())
      throw std::invalid_argument("solve: init core dims != requested");
    for (int n = 0; n < N_; ++n)
      if (w_.factor(n).rows() != p_.dim(n))
        throw std::invalid_argument("solve: init factor rows != data dims");

    core_prev_ = w_.core();
    factors_prev_ = w_.factors();
    lc_prev_ = opt_.l_min;
    ln_prev_.assign(static_cast<size_t>(N_), opt_.l_min);
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

    f_prev_ = initial_objective();
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

      double fit = 0.0, objective_now = 0.0;
      if (opt_.variant == SolverVariant::APG_I) {
        run_sweep(omega_hat, /*allow_extrap=*/true, row, fit, objective_now);
        if (objective_now > f_prev_) {
          row.redo = 1;
          restore_full_iterate();
          row.block_l.clear();
          row.block_omega.clear();
          run_sweep(0.0, /*allow_extrap=*/false, row, fit, objective_now);
        }
      } else {
        double f_running = f_prev_;
        for (int n = 0; n < N_; ++n) {
          run_pair(n, omega_hat, /*allow_extrap=*/true, row, fit,
                   objective_now);
          if (objective_now > f_running) {
            ++row.redo;
            restore_pair(n);
            row.block_l.resize(row.block_l.size() - 2);
            row.block_omega.resize(row.block_omega.size() - 2);
            run_pair(n, 0.0, /*allow_extrap=*/false, row, fit, objective_now);
          }
          f_running = objective_now;
        }
      }

      double rel_err;
      if (masked_) {
        // refresh the completion and measure everything on observed entries
        DenseTensor recon = reconstruct(w_);
        double mres = 0.0;
        const double* rm = recon.data();
        const double* om = masked_->observed->data();
        const double* mk = masked_->mask->data();
        for (index_t i = 0; i < recon.size(); ++i)
          if (mk[i] != 0.0) {
            const double d = rm[i] - om[i];
            mres += d * d;
          }
        fit = 0.5 * mres;
        objective_now = fit + penalty_value(p_.reg(), w_);
        rel_err = masked_->observed_norm > 0.0
                      ? std::sqrt(mres) / masked_->observed_norm
                      : 0.0;
        DenseTensor x(recon.shape());
        for (index_t i = 0; i < recon.size(); ++i)
          x[i] = mk[i] != 0.0 ? om[i] : rm[i];
        completion_ = x;
        p_.replace_data(x);
      } else {
        rel_err = p_.data_norm() > 0.0
                      ? relative_error_from_fit(fit, p_.data_norm())
                      : 0.0;
      }

      if (!std::isfinite(objective_now))
        throw NumericalError("objective became non-finite at iteration " +
                             std::to_string(iter_));

      row.seconds = elapsed();
      row.objective = objective_now;
      row.data_fit = fit;
      row.rel_err = rel_err;
      const Density d = density(w_);
      row.core_density = d.core;
      row.factor_density = d.factors;
      trace.total_redo += row.redo;

      // stopping: small relative error, or a flat objective for
      // `objective_decrease_window` consecutive iterations (a redone
      // iteration restarts the count)
      const double flat =
          std::abs(f_prev_ - objective_now) / (1.0 + std::abs(f_prev_));
      if (row.redo > 0)
        flat_hits = 0;
      else if (flat <= opt_.tol)
        ++flat_hits;
      else
        flat_hits = 0;

      f_prev_ = objective_now;
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
    SolveResult out{std::move(w_), std::move(trace), std::nullopt};
    if (masked_) out.completion = std::move(completion_);
    return out;
  }

 private:
  double initial_objective() {
    return data_fit_direct(w_, p_) + penalty_value(p_.reg(), w_);
  }

  void ensure_gram(int n) {
    const size_t i = static_cast<size_t>(n);
    if (gram_ver_[i] == w_.version(n + 1)) return;
    grams_[i] = gram(w_.factor(n));
    gram_norms_[i] = spectral_norm_psd(grams_[i]);
    gram_ver_[i] = w_.version(n + 1);
  }
  void install_gram(int n, Matrix g) {
    const size_t i = static_cast<size_t>(n);
    gram_norms_[i] = spectral_norm_psd(g);
    grams_[i] = std::move(g);
    gram_ver_[i] = w_.version(n + 1);
  }

  double maybe_override(double omega, int block, int pair) {
    if (opt_.omega_override) {
      const double o = opt_.omega_override(iter_, block, pair);
      if (o >= 0.0) return o;
    }
    return omega;
  }

  // one prox-gradient step on the core at the extrapolated point
  void core_step(double omega_hat_c, bool allow_extrap, int pair, double* l_out,
                 double* omega_out) {
    for (int n = 0; n < N_; ++n) ensure_gram(n);
    double prod = 1.0;
    for (int n = 0; n < N_; ++n) prod *= gram_norms_[static_cast<size_t>(n)];
    const double lc = std::max(opt_.l_min, prod);

    double omega = 0.0;
    if (allow_extrap && opt_.extrapolation == Extrapolation::FISTA)
      omega = fista_weight(omega_hat_c, lc_prev_, lc, opt_.delta_omega,
                           opt_.variant == SolverVariant::APG_I);
    omega = maybe_override(omega, 0, pair);

    DenseTensor old = w_.core();
    DenseTensor hat = old;
    if (omega != 0.0)
      hat.as_vector() += omega * (old.as_vector() - core_prev_.as_vector());

    DenseTensor grad = core_times_grams(hat, grams_);
    grad.as_vector() -= data_proj(p_.data(), w_.factors()).as_vector();

    std::optional<double> bound;
    if (!p_.core_is_penalized() && !p_.reg().core_signed) bound = p_.bound();
    w_.set_core(core_prox_step(hat, grad, lc, p_.reg(), bound));
    core_prev_ = std::move(old);
    lc_prev_ = lc;
    *l_out = lc;
    *omega_out = omega;
  }

  // one prox-gradient step on factor n; returns the data fit at the new
  // iterate through the B_n byproducts
  void factor_step(int n, double omega_hat, bool allow_extrap, int pair,
                   double* l_out, double* omega_out, double* fit_out) {
    const size_t ni = static_cast<size_t>(n);
    Matrix b = factor_b(w_.core(), w_.factors(), n);
    Matrix bbt = b * b.transpose();
    bbt.triangularView<Eigen::StrictlyUpper>() = bbt.transpose();
    Matrix mbt = matricize(p_.data(), n) * b.transpose();

    const double ln = lipschitz_factor(bbt, opt_.l_min);
    double omega = 0.0;
    if (allow_extrap && opt_.extrapolation == Extrapolation::FISTA)
      omega = fista_weight(omega_hat, ln_prev_[ni], ln, opt_.delta_omega,
                           false);
    omega = maybe_override(omega, n + 1, pair);

    Matrix old = w_.factor(n);
    Matrix hat = old;
    if (omega != 0.0) hat += omega * (old - factors_prev_[ni]);

    Matrix grad = hat * bbt;
    grad -= mbt;
    std::optional<double> bound;
    if (!p_.factor_is_penalized(n)) bound = p_.bound();
    Matrix next =
        prox_block(hat, grad, ln, p_.reg().factor_lambda(n), false, bound);

    Matrix g = gram(next);
    *fit_out = 0.5 * (g.cwiseProduct(bbt).sum() -
                      2.0 * next.cwiseProduct(mbt).sum() + p_.data_norm_sq());
    factors_prev_[ni] = std::move(old);
    w_.set_factor(n, std::move(next));
    install_gram(n, std::move(g));
    ln_prev_[ni] = ln;
    *l_out = ln;
    *omega_out = omega;
  }

  // variant I: core once, then every factor; objective from the last
  // factor's byproducts
  void run_sweep(double omega_hat, bool allow_extrap, TraceRow& row,
                 double& fit, double& objective_now) {
    double l, om;
    core_step(omega_hat, allow_extrap, -1, &l, &om);
    row.block_l.push_back(l);
    row.block_omega.push_back(om);
    for (int n = 0; n < N_; ++n) {
      factor_step(n, omega_hat, allow_extrap, -1, &l, &om, &fit);
      row.block_l.push_back(l);
      row.block_omega.push_back(om);
    }
    objective_now = fit + penalty_value(p_.reg(), w_);
  }

  // variant II: core then factor n, with the core advancing its own
  // extrapolation sequence once per pair
  void run_pair(int n, double omega_hat_factors, bool allow_extrap,
                TraceRow& row, double& fit, double& objective_now) {
    const bool fista =
        allow_extrap && opt_.extrapolation == Extrapolation::FISTA;
    const double omega_hat_c = fista ? core_seq_.advance() : 0.0;
    double l, om;
    core_step(omega_hat_c, allow_extrap, n, &l, &om);
    row.block_l.push_back(l);
    row.block_omega.push_back(om);
    factor_step(n, omega_hat_factors, allow_extrap, n, &l, &om, &fit);
    row.block_l.push_back(l);
    row.block_omega.push_back(om);
    objective_now = fit + penalty_value(p_.reg(), w_);
  }

  // back to the previous outer iterate (variant I redo)
  void restore_full_iterate() {
    w_.set_core(core_prev_);
    for (int n = 0; n < N_; ++n)
      w_.set_factor(n, factors_prev_[static_cast<size_t>(n)]);
  }
  // back to the pre-pair core and factor (variant II redo)
  void restore_pair(int n) {
    w_.set_core(core_prev_);
    w_.set_factor(n, factors_prev_[static_cast<size_t>(n)]);
  }

  Problem p_;  // by value: masked runs swap the data tensor every iteration
  TuckerModel w_;
  SolverOptions opt_;
  const MaskedSpec* masked_;
  int N_ = 0;
  int iter_ = 0;

  DenseTensor core_prev_;
  std::vector<Matrix> factors_prev_;
  FistaSequence shared_seq_, core_seq_;
  double lc_prev_ = 1.0;
  std::vector<double> ln_prev_;

  std::vector<Matrix> grams_;  // cached A_n^T A_n keyed by block version
  std::vector<double> gram_norms_;
  std::vector<std::uint64_t> gram_ver_;

  double f_prev_ = 0.0;
  DenseTensor completion_;
};

}  // namespace detail

inline SolveResult solve(const Problem& p, TuckerModel init,
                         const SolverOptions& opt) {
  detail::ApgEngine eng(p, std::move(init), opt, nullptr);
  return eng.run();
}

inline SolveResult solve_apg1(const Problem& p, TuckerModel init,
                              SolverOptions opt) {
  opt.variant = SolverVariant::APG_I;
  return solve(p, std::move(init), opt);
}

inline SolveResult solve_apg2(const Problem& p, TuckerModel init,
                              SolverOptions opt) {
  opt.variant = SolverVariant::APG_II;
  return solve(p, std::move(init), opt);
}

// Random nonnegative factors refined by one sweep of clipped leading singular
// vectors, then the projected core. Factor n is drawn uniform [0,1] from
// substream (seed, n+1); the sweep shrinks M by every other factor before the
// SVD. Each singular vector is flipped to its dominant-sign lobe before the
// clip: the SVD's sign is arbitrary, and clipping the smaller lobe strands
// the start far from any good basin (ruinous for order >= 4). A zero
// projected tensor keeps the random draw; when R_n exceeds the available
// singular vectors the surplus columns keep their random draw too.
inline TuckerModel init_hosvd(const Problem& p, std::uint64_t seed) {
  const int N = p.order();
  std::vector<Matrix> a;
  a.reserve(static_cast<size_t>(N));
  for (int n = 0; n < N; ++n) {
    Rng rng = Rng::substream(seed, static_cast<std::uint64_t>(n) + 1);
    Matrix m(p.dim(n), p.core_dim(n));
    for (index_t j = 0; j < m.cols(); ++j)
      for (index_t i = 0; i < m.rows(); ++i) m(i, j) = rng.uniform01();
    a.push_back(std::move(m));
  }
  for (int n = 0; n < N; ++n) {
    DenseTensor b = p.data();
    for (int i = 0; i < N; ++i)
      if (i != n) b = ttm(b, a[static_cast<size_t>(i)].transpose(), i);
    Matrix bn = matricize(b, n);
    if (bn.norm() == 0.0) continue;  // degenerate: keep the random draw
    Eigen::BDCSVD<Matrix> svd(bn, Eigen::ComputeThinU);
    const index_t k = std::min<index_t>(p.core_dim(n), svd.matrixU().cols());
    Matrix u = svd.matrixU().leftCols(k);
    for (index_t j = 0; j < k; ++j) {
      const double pos = u.col(j).cwiseMax(0.0).squaredNorm();
      const double neg = u.col(j).cwiseMin(0.0).squaredNorm();
      if (neg > pos) u.col(j) = -u.col(j);
    }
    a[static_cast<size_t>(n)].leftCols(k) = u.cwiseMax(0.0);
  }
  DenseTensor core = data_proj(p.data(), a);
  for (index_t i = 0; i < core.size(); ++i)
    if (core[i] < 0.0) core[i] = 0.0;
  return TuckerModel(std::move(core), std::move(a));
}

// Rebalance so every nonzero factor column has unit maximum magnitude, the
// core absorbing the scales on the matching slices. Reconstruction and zero
// patterns are unchanged.
inline TuckerModel rescale_to_bounds(const TuckerModel& w) {
  DenseTensor core = w.core();
  std::vector<Matrix> factors = w.factors();
  const int N = w.order();
  for (int n = 0; n < N; ++n) {
    Matrix& a = factors[static_cast<size_t>(n)];
    const index_t R = a.cols();
    std::vector<double> scale(static_cast<size_t>(R), 1.0);
    for (index_t j = 0; j < R; ++j) {
      const double m = a.col(j).cwiseAbs().maxCoeff();
      if (m > 0.0) {
        scale[static_cast<size_t>(j)] = m;
        a.col(j) /= m;
      }
    }
    const index_t P = core.shape().stride(n);
    const index_t Q = core.shape().trailing(n);
    double* c = core.data();
    for (index_t q = 0; q < Q; ++q)
      for (index_t j = 0; j < R; ++j) {
        const double s = scale[static_cast<size_t>(j)];
        if (s == 1.0) continue;
        double* slab = c + q * P * R + j * P;
        for (index_t p = 0; p < P; ++p) slab[p] *= s;
      }
  }
  return TuckerModel(std::move(core), std::move(factors));
}

}  // namespace sntd
