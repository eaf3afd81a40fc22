#include "oracles.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <cstring>
#include <vector>

using namespace sntd;

namespace {

// every objective step may rise only by roundoff slack
void check_monotone(const IterateTrace& tr, double first_reference) {
  double prev = first_reference;
  for (const TraceRow& r : tr.rows) {
    CHECK(r.objective <= prev + 1e-12 * (1.0 + std::abs(prev)));
    prev = r.objective;
  }
}

Problem small_problem(std::uint64_t seed, Regularization reg) {
  return Problem(oracle::random_tensor({6, 5, 4}, seed), {2, 2, 2},
                 std::move(reg));
}

bool models_bitwise_equal(const TuckerModel& a, const TuckerModel& b) {
  if (std::memcmp(a.core().data(), b.core().data(),
                  sizeof(double) * static_cast<size_t>(a.core().size())) != 0)
    return false;
  for (int n = 0; n < a.order(); ++n)
    if (std::memcmp(a.factor(n).data(), b.factor(n).data(),
                    sizeof(double) * static_cast<size_t>(a.factor(n).size())) != 0)
      return false;
  return true;
}

}  // namespace

TEST_CASE("solver options are validated", "[solver]") {
  Problem p = small_problem(1, {});
  TuckerModel init = init_hosvd(p, 1);
  SolverOptions opt;
  opt.l_min = 0.0;
  CHECK_THROWS_AS(solve(p, init, opt), std::invalid_argument);
  opt = {};
  opt.delta_omega = 1.0;
  CHECK_THROWS_AS(solve(p, init, opt), std::invalid_argument);
  opt = {};
  opt.tol = -1.0;
  CHECK_THROWS_AS(solve(p, init, opt), std::invalid_argument);
  opt = {};
  opt.objective_decrease_window = 0;
  CHECK_THROWS_AS(solve(p, init, opt), std::invalid_argument);
}

TEST_CASE("mismatched initial points are rejected", "[solver]") {
  Problem p = small_problem(2, {});
  SolverOptions opt;
  // wrong core dims
  TuckerModel bad_core(oracle::random_tensor({3, 2, 2}, 3),
                       {oracle::random_matrix(6, 3, 4),
                        oracle::random_matrix(5, 2, 5),
                        oracle::random_matrix(4, 2, 6)});
  CHECK_THROWS_AS(solve(p, bad_core, opt), std::invalid_argument);
  // wrong factor rows
  TuckerModel bad_rows(oracle::random_tensor({2, 2, 2}, 3),
                       {oracle::random_matrix(7, 2, 4),
                        oracle::random_matrix(5, 2, 5),
                        oracle::random_matrix(4, 2, 6)});
  CHECK_THROWS_AS(solve(p, bad_rows, opt), std::invalid_argument);
}

TEST_CASE("extrapolation sequence produces the classic weights", "[solver]") {
  FistaSequence seq;
  CHECK(seq.t() == 1.0);
  const double w1 = seq.advance();
  CHECK(w1 == 0.0);  // t0 = 1 makes the first weight zero
  const double t1 = 0.5 * (1.0 + std::sqrt(5.0));
  CHECK(seq.t() == Catch::Approx(t1).epsilon(1e-15));
  const double w2 = seq.advance();
  const double t2 = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t1 * t1));
  CHECK(w2 == Catch::Approx((t1 - 1.0) / t2).epsilon(1e-15));
  double prev = w2;
  for (int k = 0; k < 50; ++k) {
    const double w = seq.advance();
    CHECK(w > prev);  // weights increase toward 1
    CHECK(w < 1.0);
    prev = w;
  }
}

TEST_CASE("applied weight honors the lipschitz cap", "[solver]") {
  CHECK(fista_weight(0.9, 1.0, 1.0, 0.9999, false) == 0.9);
  // rising L tightens the cap below the nominal weight
  const double w = fista_weight(0.9, 1.0, 4.0, 0.9999, false);
  CHECK(w == Catch::Approx(0.9999 * 0.5).epsilon(1e-12));
  // falling L leaves the nominal weight; the extra cap clamps at 1
  CHECK(fista_weight(1.7, 9.0, 1.0, 0.9999, false) == 1.7);
  CHECK(fista_weight(1.7, 9.0, 1.0, 0.9999, true) == 1.0);
  CHECK(fista_weight(0.5, 1.0, 0.0, 0.9999, false) == 0.5);  // vacuous cap
}

TEST_CASE("lipschitz constants come from gram spectral norms", "[solver]") {
  std::vector<Matrix> factors = {oracle::random_matrix(6, 2, 7),
                                 oracle::random_matrix(5, 3, 8),
                                 oracle::random_matrix(4, 2, 9)};
  double prod = 1.0;
  for (const Matrix& a : factors)
    prod *= oracle::spectral_norm_svd(a.transpose() * a);
  CHECK(lipschitz_core(factors, 1.0) == Catch::Approx(std::max(1.0, prod)).epsilon(1e-7));
  // the floor engages when factors are tiny
  std::vector<Matrix> small = {Matrix::Constant(2, 1, 1e-3),
                               Matrix::Constant(2, 1, 1e-3)};
  CHECK(lipschitz_core(small, 1.0) == 1.0);

  const Matrix b = oracle::random_matrix(3, 10, 10);
  const Matrix bbt = b * b.transpose();
  CHECK(lipschitz_factor(bbt, 1.0) ==
        Catch::Approx(std::max(1.0, oracle::spectral_norm_svd(bbt))).epsilon(1e-7));
}

TEST_CASE("hosvd-style initialization is deterministic and feasible",
          "[solver]") {
  Problem p = small_problem(11, {});
  const TuckerModel w1 = init_hosvd(p, 5);
  const TuckerModel w2 = init_hosvd(p, 5);
  const TuckerModel w3 = init_hosvd(p, 6);
  CHECK(models_bitwise_equal(w1, w2));
  CHECK_FALSE(models_bitwise_equal(w1, w3));

  REQUIRE(w1.core().shape() == Shape({2, 2, 2}));
  for (int n = 0; n < 3; ++n) {
    CHECK(w1.factor(n).rows() == p.dim(n));
    CHECK(w1.factor(n).cols() == 2);
    CHECK(w1.factor(n).minCoeff() >= 0.0);
  }
  CHECK(w1.core().as_vector().minCoeff() >= 0.0);

  // overcomplete mode: surplus columns keep their random nonnegative draw
  Problem over(oracle::random_tensor({3, 4, 3}, 13), {5, 2, 2}, {});
  const TuckerModel wo = init_hosvd(over, 7);
  CHECK(wo.factor(0).cols() == 5);
  CHECK(wo.factor(0).minCoeff() >= 0.0);
}

TEST_CASE("objective decreases monotonically for both variants", "[solver]") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    Regularization reg;
    if (seed % 2 == 0) {
      reg.lambda_core = 0.05;
      reg.lambda_factor = {0.0, 0.01, 0.0};  // mixed: bound active on mode 0, 2
    }
    if (seed == 5) {
      DenseTensor w{Shape({2, 2, 2})};
      Rng rng(77);
      for (index_t i = 0; i < w.size(); ++i) w[i] = 0.1 * rng.uniform01();
      reg.core_weights = w;  // weighted core penalty route
    }
    Problem p = small_problem(100 + seed, reg);
    TuckerModel init = init_hosvd(p, seed);
    const double f0 =
        data_fit_direct(init, p) + penalty_value(p.reg(), init);

    for (SolverVariant v : {SolverVariant::APG_I, SolverVariant::APG_II}) {
      SolverOptions opt;
      opt.variant = v;
      opt.tol = 0.0;  // run the full budget
      opt.max_iters = 120;
      SolveResult res = solve(p, init, opt);
      REQUIRE(res.trace.rows.size() <= 120);
      check_monotone(res.trace, f0);
      CHECK(res.trace.total_redo <= 50);

      const size_t per_row = v == SolverVariant::APG_I ? 4 : 6;  // 1+N / 2N
      double prev_sec = 0.0;
      for (const TraceRow& r : res.trace.rows) {
        CHECK(r.block_l.size() == per_row);
        CHECK(r.block_omega.size() == per_row);
        CHECK(r.seconds >= prev_sec);
        prev_sec = r.seconds;
        CHECK((r.core_density >= 0.0 && r.core_density <= 1.0));
        CHECK((r.factor_density >= 0.0 && r.factor_density <= 1.0));
      }

      // the reported objective is the true objective of the final model
      const double f_direct =
          oracle::objective_direct(p.data(), res.model, p.reg());
      CHECK(res.trace.rows.back().objective ==
            Catch::Approx(f_direct).epsilon(1e-9).margin(1e-10));
    }
  }
}

TEST_CASE("disabling extrapolation zeroes every applied weight", "[solver]") {
  Problem p = small_problem(17, {});
  TuckerModel init = init_hosvd(p, 3);
  SolverOptions opt;
  opt.extrapolation = Extrapolation::NONE;
  opt.tol = 0.0;
  opt.max_iters = 40;
  SolveResult res = solve(p, init, opt);
  for (const TraceRow& r : res.trace.rows)
    for (double om : r.block_omega) CHECK(om == 0.0);
  check_monotone(res.trace,
                 data_fit_direct(init, p) + penalty_value(p.reg(), init));
}

TEST_CASE("a forced bad weight triggers the redo safeguard", "[solver]") {
  Problem p = small_problem(19, {});
  TuckerModel init = init_hosvd(p, 4);
  SolverOptions opt;
  opt.tol = 0.0;
  opt.max_iters = 12;
  opt.omega_override = [](int iter, int block, int) {
    return (iter == 3 && block == 0) ? 50.0 : -1.0;
  };
  SolveResult res = solve(p, init, opt);
  CHECK(res.trace.total_redo >= 1);
  check_monotone(res.trace,
                 data_fit_direct(init, p) + penalty_value(p.reg(), init));

  opt.variant = SolverVariant::APG_II;
  SolveResult res2 = solve(p, init, opt);
  CHECK(res2.trace.total_redo >= 1);
  check_monotone(res2.trace,
                 data_fit_direct(init, p) + penalty_value(p.reg(), init));
}

TEST_CASE("stop reasons cover the four exits", "[solver]") {
  // exact planted model: relative error hits tol before the objective flattens
  SynthRecipe rc;
  rc.dims = {8, 8, 8};
  rc.core_dims = {2, 2, 2};
  rc.seed = 20;
  SynthInstance inst = generate(rc);
  Problem p = to_problem(inst, {});
  SolverOptions opt;
  opt.variant = SolverVariant::APG_II;
  opt.tol = 1e-3;
  opt.max_iters = 500;
  SolveResult res = solve(p, init_hosvd(p, 1), opt);
  CHECK(res.trace.stop == StopReason::REL_ERR);
  CHECK(res.trace.rows.back().rel_err <= 1e-3);

  // iteration budget
  SolverOptions few;
  few.tol = 0.0;
  few.max_iters = 3;
  SolveResult r2 = solve(p, init_hosvd(p, 1), few);
  CHECK(r2.trace.stop == StopReason::MAX_ITERS);
  CHECK(r2.trace.rows.size() == 3);

  // time budget of zero stops before the first iteration
  SolverOptions timed;
  timed.max_seconds = 0.0;
  SolveResult r3 = solve(p, init_hosvd(p, 2), timed);
  CHECK(r3.trace.stop == StopReason::TIME_BUDGET);
  CHECK(r3.trace.rows.empty());

  // a penalty keeps the fit away from zero, so the objective flattens first
  Regularization reg;
  reg.lambda_core = 0.3;
  reg.lambda_factor = {0.1, 0.1, 0.1};
  Problem pf(inst.data, {2, 2, 2}, reg);
  SolverOptions flat;
  flat.tol = 1e-9;
  flat.max_iters = 4000;
  SolveResult r4 = solve(pf, init_hosvd(pf, 2), flat);
  CHECK(r4.trace.stop == StopReason::OBJECTIVE_FLAT);
}

TEST_CASE("identical options and seed reproduce runs bitwise", "[solver]") {
  Regularization reg;
  reg.lambda_factor = {0.01, 0.01, 0.01};
  Problem p = small_problem(23, reg);
  SolverOptions opt;
  opt.tol = 0.0;
  opt.max_iters = 60;
  opt.variant = SolverVariant::APG_II;
  SolveResult a = solve(p, init_hosvd(p, 9), opt);
  SolveResult b = solve(p, init_hosvd(p, 9), opt);
  REQUIRE(a.trace.rows.size() == b.trace.rows.size());
  for (size_t i = 0; i < a.trace.rows.size(); ++i) {
    CHECK(a.trace.rows[i].objective == b.trace.rows[i].objective);
    CHECK(a.trace.rows[i].data_fit == b.trace.rows[i].data_fit);
    CHECK(a.trace.rows[i].rel_err == b.trace.rows[i].rel_err);
  }
  CHECK(models_bitwise_equal(a.model, b.model));
}

TEST_CASE("rescaling to unit column bounds preserves the model", "[solver]") {
  Rng rng(29);
  for (int trial = 0; trial < 20; ++trial) {
    const std::vector<index_t> dims{5, 4, 3}, rdims{3, 2, 2};
    std::vector<Matrix> factors;
    for (size_t n = 0; n < dims.size(); ++n) {
      Matrix a = oracle::random_matrix(dims[n], rdims[n],
                                       1000 + 31 * trial + n);
      a *= 1.0 + 4.0 * rng.uniform01();  // spread column maxima
      for (index_t i = 0; i < a.size(); ++i)
        if (rng.uniform01() < 0.3) a.data()[i] = 0.0;
      factors.push_back(std::move(a));
    }
    DenseTensor core = oracle::random_tensor(rdims, 2000 + trial);
    for (index_t i = 0; i < core.size(); ++i)
      if (rng.uniform01() < 0.3) core[i] = 0.0;
    TuckerModel w(std::move(core), std::move(factors));

    const TuckerModel s = rescale_to_bounds(w);
    const DenseTensor before = reconstruct(w);
    const DenseTensor after = reconstruct(s);
    double diff = 0.0;
    for (index_t i = 0; i < before.size(); ++i)
      diff = std::max(diff, std::abs(before[i] - after[i]));
    CHECK(diff <= 1e-12 * (1.0 + max_abs(before)));

    auto nnz_tensor = [](const DenseTensor& t) {
      index_t c = 0;
      for (index_t i = 0; i < t.size(); ++i) c += (t[i] != 0.0);
      return c;
    };
    auto nnz_matrix = [](const Matrix& m) {
      index_t c = 0;
      for (index_t i = 0; i < m.size(); ++i) c += (m.data()[i] != 0.0);
      return c;
    };
    CHECK(nnz_tensor(s.core()) == nnz_tensor(w.core()));
    for (int n = 0; n < 3; ++n) {
      CHECK(nnz_matrix(s.factor(n)) == nnz_matrix(w.factor(n)));
      for (index_t j = 0; j < s.factor(n).cols(); ++j) {
        const double m = s.factor(n).col(j).cwiseAbs().maxCoeff();
        if (m > 0.0) CHECK(m == 1.0);  // scaled column peaks exactly at 1
      }
    }
  }
}
