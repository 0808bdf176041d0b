#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "cflow/network.hpp"
#include "cflow/sgd.hpp"

namespace cflow {

struct Theorem1Options {
  /// Spacing in alpha of the comparison grid (rounded to whole steps).
  double record_alpha = 0.1;
  /// RK4 step bound for the reference ODE solution.
  double ode_d_alpha = 0.01;
  /// Shared initial macroscopic state. When empty, one is drawn from
  /// make_student / make_teacher of the base config at dimension 200.
  std::optional<MacroState> initial;
};

struct Theorem1Point {
  std::int64_t N = 0;
  double mean_deviation = 0.0;
  double std_error = 0.0;
  std::vector<double> per_seed;
};

/// For each N: embeds the same initial order parameters in dimension N,
/// runs SGD with Gaussian inputs for horizon * N steps and returns the
/// seed-averaged max over the grid alpha in [0, horizon] of
/// ||(R, Q, v)_sim - (R, Q, v)_ode|| (Frobenius); values at rounding level (<= 1e-12) are
/// reported as 0.
/// base.N, base.steps and base.input_source are ignored.
std::vector<Theorem1Point> theorem1_deviation(const TrainConfig& base,
                                              std::span<const std::int64_t> N_list,
                                              double horizon, int seeds,
                                              const Theorem1Options& options = {});

}  // namespace cflow
