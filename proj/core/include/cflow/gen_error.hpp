#pragma once

#include <cstdint>

#include "cflow/moments.hpp"
#include "cflow/network.hpp"

namespace cflow {

/// Generalisation error 0.5 <(phi_student - phi_teacher)^2> from the order
/// parameters alone: 0.5 * sum_pq a_p a_q I2(p, q) over all K + M fields with
/// a = (v, -v_star). For Erf this is the arcsin expression; for Linear the
/// quadratic form in (Q, R, T); for ReLU the arc-cosine kernel.
/// Throws NotPositiveSemidefinite / DomainError beyond the 1e-9 allowance.
double gen_error_analytic(const MacroState& m, Activation act);

/// Same quantity without the PSD eigen-check, for inner loops whose state is
/// known to be a Gram matrix up to round-off.
double gen_error_unchecked(const MacroState& m, Activation act);

enum class McInput {
  /// Full N-dimensional standard Gaussian inputs.
  Full,
  /// Gaussian inputs restricted to the span of the weight rows. The
  /// component orthogonal to that span never reaches a hidden unit, so this
  /// has exactly the same distribution of outputs at O(K + M) cost per draw.
  Projected,
};

/// Monte Carlo estimate of 0.5 <(phi_s - phi_t)^2> over standard Gaussian
/// inputs; deterministic given seed.
McEstimate gen_error_mc(const NetworkParams& student, const NetworkParams& teacher,
                        Activation act, std::int64_t n_samples, std::uint64_t seed,
                        McInput input = McInput::Projected);

}  // namespace cflow
