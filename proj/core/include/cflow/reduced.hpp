#pragma once

#include <array>

#include <Eigen/Dense>

#include "cflow/activation.hpp"
#include "cflow/network.hpp"

namespace cflow {

/// Block values of the soft-committee overlaps for K = M + L students
/// learning from an M-unit teacher with T = identity and v = v* = 1:
///   Q_ij = Q (i = j <= M), C (i != j <= M), D (one index above M),
///          E (i = j > M), F (i != j > M)
///   R_in = R (i = n), S (i != n, i <= M), U (i > M)
struct ReducedScmState {
  double Q = 0.0, C = 0.0, D = 0.0, E = 0.0, F = 0.0, R = 0.0, S = 0.0, U = 0.0;
};

/// Names in storage order, and which of them exist for a given (M, L):
/// C and S need M >= 2, D/E/U need L >= 1, F needs L >= 2.
inline constexpr std::array<const char*, 8> kScmParamNames = {"Q", "C", "D", "E",
                                                              "F", "R", "S", "U"};
std::array<bool, 8> scm_active(int M, int L);
std::array<double, 8> to_array(const ReducedScmState& s);
ReducedScmState scm_from_array(const std::array<double, 8>& a);

/// Noiseless fixed point R = Q = 1, everything else 0.
ReducedScmState scm_fixed_point();

MacroState embed_scm(const ReducedScmState& s, int M, int L);

/// Reads block representatives (block means) back from an embedded-shape
/// matrix pair; throws ManifoldViolation if any block spreads by more than
/// tol * (1 + max |entry|).
ReducedScmState project_scm(const Eigen::MatrixXd& R, const Eigen::MatrixXd& Q, int M, int L,
                            double tol = 1e-8);

/// d/d alpha of the eight block values, read off full_rhs of the embedded
/// state. Inactive parameters get derivative 0.
ReducedScmState reduced_scm_rhs(const ReducedScmState& s, int M, int L, double eta,
                                double sigma, Activation act = Activation::Erf);

/// Both-layer ansatz for K = Z M students:
///   Q_ij = Q if i mod M == j mod M else C
///   R_in = R if i mod M == n mod M else S
/// with one common second-layer weight v for every student unit.
struct DenoisingState {
  double Q = 0.0, C = 0.0, R = 0.0, S = 0.0, v = 0.0;
};

/// Q = R = 1, C = S = 0, v = v_star / Z.
DenoisingState denoising_fixed_point(int Z, double v_star);

MacroState embed_denoising(const DenoisingState& s, int M, int Z, double v_star);

DenoisingState project_denoising(const Eigen::MatrixXd& R, const Eigen::MatrixXd& Q,
                                 const Eigen::VectorXd& v, int M, int Z, double tol = 1e-8);

DenoisingState denoising_rhs(const DenoisingState& s, int M, int Z, double eta_w, double eta_v,
                             double sigma, double v_star, Activation act = Activation::Erf);

}  // namespace cflow
