#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "cflow/activation.hpp"
#include "cflow/network.hpp"
#include "cflow/sgd.hpp"

namespace cflow {

enum class Integrator { Euler, RK4 };

struct OdeConfig {
  int M = 1;
  int K = 1;
  Activation activation = Activation::Erf;
  double eta_w = 0.1;
  double eta_v = 0.0;
  double sigma = 0.0;
  TrainMode mode = TrainMode::SCM;
  Integrator integrator = Integrator::Euler;
  double d_alpha = 1e-3;
};

/// SCM forces eta_v = 0; throws Config on non-positive sizes or d_alpha.
OdeConfig validated(OdeConfig cfg);

/// d/d alpha of (R, Q, v) at m, averaged over the Gaussian local fields:
///   dR_in = -eta_w v_i sum_p a_p I3(i, n, p)
///   dQ_ik = -eta_w [v_i sum_p a_p I3(i, k, p) + v_k sum_p a_p I3(k, i, p)]
///           + eta_w^2 v_i v_k [sum_pq a_p a_q I4(i, k, p, q) + sigma^2 J2(i, k)]
///   dv_i  = -eta_v sum_p a_p I2(i, p)                 (BothLayers only)
/// where p, q run over the K student and M teacher fields and
/// a = (v, -v_star). The returned T and v_star entries are zero.
MacroState full_rhs(const MacroState& m, const OdeConfig& cfg);

/// Flat (R, upper triangle of Q, v) vector used by the integrators.
Eigen::VectorXd pack_dynamic(const MacroState& m);
/// Inverse of pack_dynamic, with T and v_star taken from `frame`.
MacroState unpack_dynamic(const Eigen::VectorXd& y, const MacroState& frame);

using VectorField = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;

/// One fixed step of forward Euler or classical RK4.
Eigen::VectorXd integrator_step(const VectorField& f, const Eigen::VectorXd& y, double h,
                                Integrator method);

struct StatePoint {
  double alpha = 0.0;
  Eigen::VectorXd state;
};

struct VectorTrajectory {
  std::vector<StatePoint> points;
  bool aborted = false;
  std::string diagnostic;
};

/// Fixed-step integration of a generic vector field over [0, alpha_max],
/// recording every `record_every` steps and at the end. Aborts (keeping the
/// partial trajectory) on non-finite states, |y|_inf > 1e6, or a cflow::Error
/// thrown by the field.
VectorTrajectory integrate_vector(const VectorField& f, Eigen::VectorXd y0, double d_alpha,
                                  double alpha_max, Integrator method,
                                  std::int64_t record_every = 1);

struct OdePoint {
  double alpha = 0.0;
  MacroState state;
  double eg = 0.0;
};

struct Trajectory {
  std::vector<OdePoint> points;
  bool aborted = false;
  std::string diagnostic;
};

/// Integrates full_rhs from `initial` to alpha_max with cfg's integrator and
/// step, recording (alpha, state, eg) every `record_every` steps.
Trajectory integrate(const MacroState& initial, const OdeConfig& cfg, double alpha_max,
                     std::int64_t record_every = 1);

}  // namespace cflow
