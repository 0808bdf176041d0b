#pragma once

#include <functional>
#include <variant>

#include <Eigen/Dense>

#include "cflow/activation.hpp"

namespace cflow {

/// Soft committee machine with K = M + L units on the eight-parameter ansatz.
struct ReducedScmSystem {
  int M = 1;
  int L = 0;
  Activation activation = Activation::Erf;  // Erf or Linear
};

/// Both layers trained with eta_w = eta_v = eta on the K = Z M ansatz.
struct DenoisingSystem {
  int M = 1;
  int Z = 1;
};

/// K = M = 1 Erf network learning from a teacher with squared norm T * N.
struct PerceptronSystem {
  double T = 1.0;
};

using PerturbativeSystem = std::variant<ReducedScmSystem, DenoisingSystem, PerceptronSystem>;

/// The reduced dynamics of one system at fixed eta, as a function of the
/// active order parameters x and the noise variance sigma^2.
struct PerturbativeProblem {
  Eigen::VectorXd x0;  // noiseless fixed point
  std::function<Eigen::VectorXd(const Eigen::VectorXd& x, double sigma2)> rhs;
  std::function<double(const Eigen::VectorXd& x)> eg;
};

PerturbativeProblem make_problem(const PerturbativeSystem& system, double eta, double v_star = 1.0);

struct PerturbativeResult {
  Eigen::VectorXd x0;
  Eigen::VectorXd x1;     // X = x0 + sigma^2 x1
  double eg_slope = 0.0;  // d eg / d sigma^2 at sigma = 0
  double eg = 0.0;        // sigma^2 * eg_slope
  double condition = 0.0; // of the Jacobian at x0 (inf when exactly singular)
  int rank = 0;
};

/// Linearises rhs at x0 (central differences, step 1e-6 max(|x|, 1)) and
/// solves J x1 = -d rhs / d sigma^2 by truncated SVD. The rhs is affine in
/// sigma^2, so the right-hand side is rhs(x0, 1) - rhs(x0, 0) exactly.
/// Singular directions are dropped (minimum-norm solution) as long as the
/// system stays consistent; otherwise SingularJacobian is thrown.
PerturbativeResult perturbative_solve(const PerturbativeSystem& system, double eta, double sigma,
                                      double v_star = 1.0);

/// Asymptotic eg to first order in sigma^2.
double perturbative_eg(const PerturbativeSystem& system, double eta, double sigma,
                       double v_star = 1.0);

/// Central-difference Jacobian of f at x.
Eigen::MatrixXd numeric_jacobian(const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& f,
                                 const Eigen::VectorXd& x, double rel_step = 1e-6);

}  // namespace cflow
