// Synthetic instances: a planted Tucker model with configurable entry laws
// and exact sparsity, optional unit-max rescaling, additive Gaussian noise at
// a prescribed SNR, and a Bernoulli observation mask. Reproducible given the
// seed: every purpose draws from its own substream (core = tag 100,
// factor n = 101+n, core/factor sparsity patterns = 200/201+n, noise = 300,
// mask = 301), so toggling one feature never shifts another one's draws.
#pragma once

#include "sntd/masked.hpp"
#include "sntd/model.hpp"
#include "sntd/hopca.hpp"
#include "sntd/rng.hpp"
#include "sntd/tensor.hpp"

#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <vector>

namespace sntd {

enum class EntryLaw { UNIFORM01, CLIPPED_GAUSSIAN, GAUSSIAN };

struct SynthRecipe {
  std::vector<index_t> dims;
  std::vector<index_t> core_dims;
  EntryLaw core_law = EntryLaw::UNIFORM01;
  EntryLaw factor_law = EntryLaw::CLIPPED_GAUSSIAN;
  double sparsify_core = 0.0;     // fraction of core entries forced to zero
  double sparsify_factors = 0.0;  // fraction of each factor forced to zero
  bool rescale_unit_max = false;  // scale the data to unit maximum magnitude
  bool normalize_columns = false; // unit-norm factor columns (PCA recipes)
  std::optional<double> noise_snr;  // additive Gaussian noise at this dB SNR
  std::optional<double> mask_sr;    // Bernoulli observation rate
  std::uint64_t seed = 0;
};

struct SynthInstance {
  DenseTensor data;
  std::optional<DenseTensor> mask;
  TuckerModel truth;
};

inline double snr_of(const DenseTensor& signal, const DenseTensor& noise) {
  const double s = frob_norm_sq(signal), n = frob_norm_sq(noise);
  if (n == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(s / n);
}

namespace detail {

inline double draw_entry(Rng& rng, EntryLaw law) {
  switch (law) {
    case EntryLaw::UNIFORM01: return rng.uniform01();
    case EntryLaw::CLIPPED_GAUSSIAN: return std::max(0.0, rng.gaussian());
    case EntryLaw::GAUSSIAN: return rng.gaussian();
  }
  return 0.0;
}

// zero exactly floor(fraction * n) distinct positions, chosen uniformly by a
// partial Fisher-Yates shuffle
inline void sparsify(double* x, index_t n, double fraction, Rng rng) {
  const index_t kill = static_cast<index_t>(
      std::floor(fraction * static_cast<double>(n)));
  if (kill <= 0) return;
  std::vector<index_t> idx(static_cast<size_t>(n));
  for (index_t i = 0; i < n; ++i) idx[static_cast<size_t>(i)] = i;
  for (index_t i = 0; i < kill; ++i) {
    const index_t j =
        i + static_cast<index_t>(rng.below(static_cast<std::uint64_t>(n - i)));
    std::swap(idx[static_cast<size_t>(i)], idx[static_cast<size_t>(j)]);
    x[idx[static_cast<size_t>(i)]] = 0.0;
  }
}

}  // namespace detail

inline SynthInstance generate(const SynthRecipe& rc) {
  const int N = static_cast<int>(rc.dims.size());
  if (N == 0 || rc.core_dims.size() != rc.dims.size())
    throw std::invalid_argument("generate: dims and core_dims must match");
  if (rc.sparsify_core < 0.0 || rc.sparsify_core > 1.0 ||
      rc.sparsify_factors < 0.0 || rc.sparsify_factors > 1.0)
    throw std::invalid_argument("generate: sparsify fractions must be in [0,1]");
  if (rc.mask_sr && (*rc.mask_sr < 0.0 || *rc.mask_sr > 1.0))
    throw std::invalid_argument("generate: mask_sr must be in [0,1]");

  DenseTensor core{Shape(rc.core_dims)};
  {
    Rng rng = Rng::substream(rc.seed, 100);
    for (index_t i = 0; i < core.size(); ++i)
      core[i] = detail::draw_entry(rng, rc.core_law);
    detail::sparsify(core.data(), core.size(), rc.sparsify_core,
                     Rng::substream(rc.seed, 200));
  }

  std::vector<Matrix> factors;
  factors.reserve(static_cast<size_t>(N));
  for (int n = 0; n < N; ++n) {
    Matrix a(rc.dims[static_cast<size_t>(n)],
             rc.core_dims[static_cast<size_t>(n)]);
    Rng rng =
        Rng::substream(rc.seed, 101 + static_cast<std::uint64_t>(n));
    for (index_t j = 0; j < a.cols(); ++j)
      for (index_t i = 0; i < a.rows(); ++i)
        a(i, j) = detail::draw_entry(rng, rc.factor_law);
    detail::sparsify(a.data(), a.size(), rc.sparsify_factors,
                     Rng::substream(rc.seed, 201 + static_cast<std::uint64_t>(n)));
    if (rc.normalize_columns)
      for (index_t j = 0; j < a.cols(); ++j) {
        const double nn = a.col(j).norm();
        if (nn > 0.0) a.col(j) /= nn;
      }
    factors.push_back(std::move(a));
  }

  TuckerModel truth(std::move(core), std::move(factors));
  DenseTensor data = reconstruct(truth);

  if (rc.rescale_unit_max) {
    const double s = max_abs(data);
    if (s > 0.0) {
      data.as_vector() /= s;
      DenseTensor c = truth.core();
      c.as_vector() /= s;
      truth.set_core(std::move(c));
    }
  }

  if (rc.noise_snr) {
    DenseTensor noise(data.shape());
    Rng rng = Rng::substream(rc.seed, 300);
    for (index_t i = 0; i < noise.size(); ++i) noise[i] = rng.gaussian();
    const double nn = frob_norm(noise);
    if (nn > 0.0) {
      const double eta =
          frob_norm(data) / (nn * std::pow(10.0, *rc.noise_snr / 20.0));
      data.as_vector() += eta * noise.as_vector();
    }
  }

  std::optional<DenseTensor> mask;
  if (rc.mask_sr) {
    DenseTensor m(data.shape());
    Rng rng = Rng::substream(rc.seed, 301);
    for (index_t i = 0; i < m.size(); ++i)
      m[i] = rng.uniform01() < *rc.mask_sr ? 1.0 : 0.0;
    mask = std::move(m);
  }

  return SynthInstance{std::move(data), std::move(mask), std::move(truth)};
}

// validated conversions into the solver-facing problem types
inline Problem to_problem(const SynthInstance& inst, Regularization reg) {
  return Problem(inst.data, inst.truth.core().shape().dims(), std::move(reg));
}

inline MaskedProblem to_masked_problem(const SynthInstance& inst,
                                       Regularization reg) {
  if (!inst.mask)
    throw std::invalid_argument("to_masked_problem: instance has no mask");
  return MaskedProblem(inst.data, *inst.mask,
                       inst.truth.core().shape().dims(), std::move(reg));
}

inline HopcaProblem to_hopca_problem(const SynthInstance& inst,
                                     Regularization reg, double mu) {
  return HopcaProblem(inst.data, inst.truth.core().shape().dims(),
                      std::move(reg), mu);
}

}  // namespace sntd
