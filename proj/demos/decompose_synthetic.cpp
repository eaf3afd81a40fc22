// Decompose a planted nonnegative tensor with both update orderings and show
// how the relative error falls. Run without arguments.
#include "sntd/sntd.hpp"

#include <cstdio>

using namespace sntd;

int main() {
  SynthRecipe rc;
  rc.dims = {30, 30, 30};
  rc.core_dims = {4, 4, 4};
  rc.sparsify_core = 0.3;
  rc.rescale_unit_max = true;
  rc.seed = 1;
  const SynthInstance inst = generate(rc);

  Regularization reg;
  reg.lambda_core = 0.001;  // mild sparsity pressure on the core
  Problem p = to_problem(inst, reg);

  for (SolverVariant v : {SolverVariant::APG_I, SolverVariant::APG_II}) {
    SolverOptions opt;
    opt.variant = v;
    opt.tol = 1e-4;
    opt.max_iters = 1000;
    const SolveResult res = solve(p, init_hosvd(p, 1), opt);

    std::printf("%s: %zu iterations, stop=%s, redo=%d\n",
                v == SolverVariant::APG_I ? "per-sweep updates"
                                          : "interleaved pair updates",
                res.trace.rows.size(), to_string(res.trace.stop),
                res.trace.total_redo);
    for (size_t i = 0; i < res.trace.rows.size();
         i += std::max<size_t>(1, res.trace.rows.size() / 8)) {
      const TraceRow& r = res.trace.rows[i];
      std::printf("  iter %4d  F=%.6e  relerr=%.3e  core density %.0f%%\n",
                  r.iter, r.objective, r.rel_err, 100.0 * r.core_density);
    }
    const TraceRow& last = res.trace.rows.back();
    std::printf("  final relerr %.3e, factor density %.0f%%\n\n", last.rel_err,
                100.0 * last.factor_density);
  }
  return 0;
}
