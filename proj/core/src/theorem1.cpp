#include "cflow/theorem1.hpp"

#include <algorithm>
#include <cmath>

#include "cflow/error.hpp"
#include "cflow/ode.hpp"
#include "cflow/random.hpp"
#include "cflow/stats.hpp"

namespace cflow {

namespace {

constexpr double kRoundingFloor = 1e-12;

double deviation(const MacroState& a, const MacroState& b) {
  const double r = (a.R - b.R).squaredNorm();
  const double q = (a.Q - b.Q).squaredNorm();
  const double v = (a.v - b.v).squaredNorm();
  return std::sqrt(r + q + v);
}

MacroState default_initial(const TrainConfig& base) {
  TrainConfig cfg = base;
  cfg.N = 200;
  cfg.input_source = GaussianStreamSpec{};
  const NetworkParams teacher = make_teacher(cfg);
  const NetworkParams student = make_student(cfg);
  return measure_macro(student, teacher);
}

}  // namespace

std::vector<Theorem1Point> theorem1_deviation(const TrainConfig& raw_base,
                                              std::span<const std::int64_t> N_list,
                                              double horizon, int seeds,
                                              const Theorem1Options& options) {
  if (!(horizon >= 0.0) || !std::isfinite(horizon)) {
    throw Error(ErrorCode::InvalidArgument, "horizon must be finite and >= 0");
  }
  if (seeds < 1) throw Error(ErrorCode::InvalidArgument, "need at least one seed");
  if (N_list.empty()) throw Error(ErrorCode::InvalidArgument, "empty list of N");
  if (!(options.record_alpha > 0.0) || !(options.ode_d_alpha > 0.0)) {
    throw Error(ErrorCode::InvalidArgument, "record_alpha and ode_d_alpha must be positive");
  }
  TrainConfig base = raw_base;
  base.input_source = GaussianStreamSpec{};
  base = validated(base);

  const MacroState initial = options.initial ? *options.initial : default_initial(base);
  check_macro_state(initial);
  if (initial.K() != base.K || initial.M() != base.M) {
    throw Error(ErrorCode::DimensionMismatch, "initial state shape does not match (K, M)");
  }

  OdeConfig ode;
  ode.M = static_cast<int>(base.M);
  ode.K = static_cast<int>(base.K);
  ode.activation = base.activation;
  ode.eta_w = base.eta_w;
  ode.eta_v = base.eta_v;
  ode.sigma = base.sigma;
  ode.mode = base.mode;
  ode.integrator = Integrator::RK4;

  std::vector<Theorem1Point> out;
  for (const std::int64_t n : N_list) {
    if (n < base.K + base.M) throw Error(ErrorCode::InvalidArgument, "N must be >= K + M");
    const std::int64_t stride =
        std::max<std::int64_t>(1, std::llround(options.record_alpha * static_cast<double>(n)));
    const std::int64_t steps = std::llround(horizon * static_cast<double>(n));

    // Reference solution sampled at the simulation's record times.
    const double grid = static_cast<double>(stride) / static_cast<double>(n);
    const auto sub = static_cast<std::int64_t>(std::ceil(grid / options.ode_d_alpha - 1e-9));
    ode.d_alpha = grid / static_cast<double>(sub);
    const double alpha_end = static_cast<double>(steps) / static_cast<double>(n);
    const Trajectory traj = integrate(initial, ode, alpha_end, sub);
    if (traj.aborted) throw Error(ErrorCode::Divergence, "reference ODE failed: " + traj.diagnostic);

    Theorem1Point point;
    point.N = n;
    for (int s = 0; s < seeds; ++s) {
      TrainConfig cfg = base;
      cfg.N = n;
      cfg.steps = steps;
      cfg.seed = derive_seed(base.seed, 1000u + static_cast<std::uint64_t>(s) * 7919u +
                                            static_cast<std::uint64_t>(n));
      const NetworkPair pair = embed_macro_state(initial, n, derive_seed(cfg.seed, 6));
      InputSource source = InputSource::gaussian_stream(n, derive_seed(cfg.seed, 4));
      RunOptions ro;
      ro.record_stride = stride;
      ro.record_macro = true;
      ro.initial_student = pair.student;
      const SimRun sim = run(cfg, pair.teacher, source, ro);
      if (sim.aborted) throw Error(ErrorCode::NonFinite, "SGD run diverged: " + sim.diagnostic);

      double worst = 0.0;
      for (const SimRecord& rec : sim.records) {
        // Both grids are multiples of `grid`, except possibly a trailing record.
        const double pos = rec.alpha / grid;
        const auto k = static_cast<std::size_t>(std::llround(pos));
        if (std::abs(pos - static_cast<double>(k)) > 1e-6 || k >= traj.points.size()) continue;
        worst = std::max(worst, deviation(*rec.macro, traj.points[k].state));
      }
      // The embedding reproduces the initial overlaps only to rounding; a
      // deviation at that level means the two descriptions coincide.
      point.per_seed.push_back(worst <= kRoundingFloor ? 0.0 : worst);
    }
    point.mean_deviation = mean(point.per_seed);
    point.std_error = standard_error(point.per_seed);
    out.push_back(std::move(point));
  }
  return out;
}

}  // namespace cflow
