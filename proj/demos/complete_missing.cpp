// Recover a low-rank nonnegative tensor from half of its entries and report
// the error on the unobserved part. Run without arguments.
#include "sntd/sntd.hpp"

#include <cmath>
#include <cstdio>

using namespace sntd;

int main() {
  SynthRecipe rc;
  rc.dims = {25, 25, 25};
  rc.core_dims = {4, 4, 4};
  rc.core_law = EntryLaw::CLIPPED_GAUSSIAN;
  rc.rescale_unit_max = true;
  rc.mask_sr = 0.5;
  rc.seed = 2;
  const SynthInstance inst = generate(rc);

  MaskedProblem mp = to_masked_problem(inst, {});
  std::printf("observed %lld of %lld entries\n",
              static_cast<long long>(mp.observed_count()),
              static_cast<long long>(inst.data.size()));

  SolverOptions opt;
  opt.variant = SolverVariant::APG_II;
  opt.tol = 1e-5;
  opt.max_iters = 3000;
  const SolveResult res = solve_masked(mp, init_hosvd(mp, 2), opt);

  const TraceRow& last = res.trace.rows.back();
  std::printf("%zu iterations, stop=%s, observed relerr %.3e\n",
              res.trace.rows.size(), to_string(res.trace.stop), last.rel_err);

  // measure against the full ground truth, split by observed / hidden
  double num_obs = 0.0, num_hid = 0.0, den = 0.0;
  const DenseTensor& x = *res.completion;
  for (index_t i = 0; i < inst.data.size(); ++i) {
    const double d = x[i] - inst.data[i];
    if ((*inst.mask)[i] != 0.0)
      num_obs += d * d;
    else
      num_hid += d * d;
    den += inst.data[i] * inst.data[i];
  }
  std::printf("full-tensor relerr %.3e (observed part %.3e, hidden part %.3e)\n",
              std::sqrt(num_obs + num_hid) / std::sqrt(den),
              std::sqrt(num_obs) / std::sqrt(den),
              std::sqrt(num_hid) / std::sqrt(den));
  return 0;
}
