#pragma once

#include <cstdint>
#include <span>

#include <Eigen/Dense>

#include "cflow/activation.hpp"

namespace cflow {

/// Covariance of 2, 3 or 4 zero-mean jointly Gaussian local fields.
/// Construction checks symmetry (1e-12) and eigenvalues >= -psd_tolerance.
class CovBlock {
 public:
  explicit CovBlock(Eigen::MatrixXd c, double psd_tolerance = 1e-9);

  int dim() const noexcept { return static_cast<int>(c_.rows()); }
  const Eigen::MatrixXd& matrix() const noexcept { return c_; }
  double operator()(int a, int b) const { return c_(a, b); }

 private:
  Eigen::MatrixXd c_;
};

enum class MomentKind { I2, I3, I4, J2 };

int moment_dim(MomentKind kind) noexcept;

// Gaussian moments, all with plain expectation semantics <...>:
//   i2 = <g(a) g(b)>            j2 = <g'(a) g'(b)>
//   i3 = <g'(a) b g(c)>         i4 = <g'(a) g'(b) g(c) g(d)>
// Erf and Linear use closed forms; ReLU is reduced exactly to orthant
// probabilities by Gaussian integration by parts (see relu_moments.hpp).
double i2(const CovBlock& cov, Activation act);
double j2(const CovBlock& cov, Activation act);
double i3(const CovBlock& cov, Activation act);
double i4(const CovBlock& cov, Activation act);

struct McEstimate {
  double estimate = 0.0;
  double std_error = 0.0;
};

/// Monte Carlo oracle: samples the fields through the symmetric square root
/// of the covariance and averages the integrand. Requires n_samples >= 1000.
McEstimate mc_moment(MomentKind kind, const CovBlock& cov, Activation act,
                     std::int64_t n_samples, std::uint64_t seed);

/// Unchecked evaluators on raw covariance entries for inner loops. They
/// still raise DomainError when an arcsin argument or a determinant leaves
/// its domain by more than the 1e-9 round-off allowance.
namespace moment_kernels {

double i2(Activation act, double c11, double c12, double c22);
double j2(Activation act, double c11, double c12, double c22);
double i3(Activation act, const Eigen::Matrix3d& c);
double i4(Activation act, const Eigen::Matrix4d& c);

}  // namespace moment_kernels

}  // namespace cflow
