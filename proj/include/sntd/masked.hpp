// Tucker decomposition with missing data. The solver alternates the usual
// core/factor updates against a completion tensor X that agrees with the
// observations on the mask and with the current reconstruction elsewhere;
// X is refreshed once per outer iteration. Trace metrics (objective, data
// fit, relative error) are measured on observed entries only.
#pragma once

#include "sntd/model.hpp"
#include "sntd/solver.hpp"
#include "sntd/tensor.hpp"

#include <stdexcept>
#include <utility>
#include <vector>

namespace sntd {

// keep observed entries, zero elsewhere (off-mask values may be garbage, so
// this selects rather than multiplies)
inline DenseTensor project_mask(const DenseTensor& x, const DenseTensor& mask) {
  if (x.shape() != mask.shape())
    throw std::invalid_argument("project_mask: shape mismatch");
  DenseTensor out(x.shape());
  for (index_t i = 0; i < x.size(); ++i)
    out[i] = mask[i] != 0.0 ? x[i] : 0.0;
  return out;
}

// X = P_Omega(M) + P_Omega^c(recon), as a selection so observed entries are
// carried over bit for bit
inline DenseTensor update_completion(const DenseTensor& observed,
                                     const DenseTensor& recon,
                                     const DenseTensor& mask) {
  if (observed.shape() != mask.shape() || recon.shape() != mask.shape())
    throw std::invalid_argument("update_completion: shape mismatch");
  DenseTensor out(mask.shape());
  for (index_t i = 0; i < out.size(); ++i)
    out[i] = mask[i] != 0.0 ? observed[i] : recon[i];
  return out;
}

class MaskedProblem {
 public:
  MaskedProblem(DenseTensor observed, DenseTensor mask,
                std::vector<index_t> core_dims, Regularization reg)
      : mask_(std::move(mask)) {
    if (observed.shape() != mask_.shape())
      throw std::invalid_argument(
          "MaskedProblem: observed and mask shapes differ");
    for (index_t i = 0; i < mask_.size(); ++i)
      if (mask_[i] != 0.0 && mask_[i] != 1.0)
        throw std::invalid_argument(
            "MaskedProblem: mask entries must be exactly 0 or 1");
    observed_ = project_mask(observed, mask_);
    // the inner problem starts from X^0 = P_Omega(M); its box bound is fixed
    // from the observed entries and never refreshed as X evolves
    inner_.emplace(observed_, std::move(core_dims), std::move(reg));
    observed_norm_ = frob_norm(observed_);
  }

  const DenseTensor& observed() const { return observed_; }  // zeros off-mask
  const DenseTensor& mask() const { return mask_; }
  const Problem& problem() const { return *inner_; }
  double observed_norm() const { return observed_norm_; }
  index_t observed_count() const {
    index_t c = 0;
    for (index_t i = 0; i < mask_.size(); ++i) c += (mask_[i] != 0.0);
    return c;
  }

 private:
  DenseTensor observed_;
  DenseTensor mask_;
  std::optional<Problem> inner_;
  double observed_norm_ = 0.0;
};

inline SolveResult solve_masked(const MaskedProblem& mp, TuckerModel init,
                                const SolverOptions& opt) {
  detail::MaskedSpec spec{&mp.observed(), &mp.mask(), mp.observed_norm()};
  detail::ApgEngine eng(mp.problem(), std::move(init), opt, &spec);
  return eng.run();
}

// initialization for masked runs: the usual routine applied to P_Omega(M)
inline TuckerModel init_hosvd(const MaskedProblem& mp, std::uint64_t seed) {
  return init_hosvd(mp.problem(), seed);
}

}  // namespace sntd
