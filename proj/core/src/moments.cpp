#include "cflow/moments.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <string>

#include "cflow/error.hpp"
#include "cflow/random.hpp"
#include "cflow/relu_moments.hpp"

namespace cflow {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kDomainTolerance = 1e-9;

double checked_asin(double arg, const char* what) {
  if (!std::isfinite(arg) || std::abs(arg) > 1.0 + kDomainTolerance) {
    throw Error(ErrorCode::DomainError,
                std::string(what) + ": arcsin argument " + std::to_string(arg) + " outside [-1, 1]");
  }
  return std::asin(std::clamp(arg, -1.0, 1.0));
}

double checked_positive(double value, const char* what) {
  if (!(value > 0.0)) {
    throw Error(ErrorCode::DomainError,
                std::string(what) + " must be positive, got " + std::to_string(value));
  }
  return value;
}

double erf_i2(double c11, double c12, double c22) {
  const double denom = checked_positive((1.0 + c11) * (1.0 + c22), "I2 normaliser");
  return (2.0 / kPi) * checked_asin(c12 / std::sqrt(denom), "I2");
}

double erf_j2(double c11, double c12, double c22) {
  const double disc = checked_positive(1.0 + c11 + c22 + c11 * c22 - c12 * c12, "J2 discriminant");
  return (2.0 / kPi) / std::sqrt(disc);
}

double erf_i3(const Eigen::Matrix3d& c) {
  const double c11 = c(0, 0);
  const double lambda3 = checked_positive((1.0 + c11) * (1.0 + c(2, 2)) - c(0, 2) * c(0, 2), "Lambda3");
  return (2.0 / kPi) / std::sqrt(lambda3) * (c(1, 2) * (1.0 + c11) - c(0, 1) * c(0, 2)) /
         (1.0 + c11);
}

double erf_i4(const Eigen::Matrix4d& c) {
  const double c11 = c(0, 0), c12 = c(0, 1), c13 = c(0, 2), c14 = c(0, 3);
  const double c22 = c(1, 1), c23 = c(1, 2), c24 = c(1, 3);
  const double c33 = c(2, 2), c34 = c(2, 3), c44 = c(3, 3);
  const double lambda4 = checked_positive((1.0 + c11) * (1.0 + c22) - c12 * c12, "Lambda4");
  const double lambda0 = lambda4 * c34 - c23 * c24 * (1.0 + c11) - c13 * c14 * (1.0 + c22) +
                         c12 * c13 * c24 + c12 * c14 * c23;
  const double lambda1 =
      lambda4 * (1.0 + c33) - c23 * c23 * (1.0 + c11) - c13 * c13 * (1.0 + c22) + 2.0 * c12 * c13 * c23;
  const double lambda2 =
      lambda4 * (1.0 + c44) - c24 * c24 * (1.0 + c11) - c14 * c14 * (1.0 + c22) + 2.0 * c12 * c14 * c24;
  const double norm = checked_positive(lambda1 * lambda2, "Lambda1 * Lambda2");
  return (4.0 / (kPi * kPi)) / std::sqrt(lambda4) * checked_asin(lambda0 / std::sqrt(norm), "I4");
}

double relu_i4(const Eigen::Matrix4d& c) {
  static constexpr std::array<FieldFactor, 4> factors{FieldFactor::Step, FieldFactor::Step,
                                                      FieldFactor::Relu, FieldFactor::Relu};
  return gaussian_piecewise_expectation(c, factors);
}

void require_dim(const CovBlock& cov, int dim, const char* what) {
  if (cov.dim() != dim) {
    throw Error(ErrorCode::DimensionMismatch, std::string(what) + " needs a " +
                                                  std::to_string(dim) + "x" + std::to_string(dim) +
                                                  " covariance");
  }
}

}  // namespace

CovBlock::CovBlock(Eigen::MatrixXd c, double psd_tolerance) : c_(std::move(c)) {
  if (c_.rows() != c_.cols() || c_.rows() < 2 || c_.rows() > 4) {
    throw Error(ErrorCode::DimensionMismatch, "covariance block must be 2x2, 3x3 or 4x4");
  }
  if (!c_.allFinite()) throw Error(ErrorCode::NonFinite, "covariance contains NaN or inf");
  const double scale = std::max(1.0, c_.cwiseAbs().maxCoeff());
  if ((c_ - c_.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale) {
    throw Error(ErrorCode::InvalidArgument, "covariance is not symmetric");
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(c_, Eigen::EigenvaluesOnly);
  if (eig.eigenvalues()(0) < -psd_tolerance) {
    throw Error(ErrorCode::NotPositiveSemidefinite,
                "covariance has eigenvalue " + std::to_string(eig.eigenvalues()(0)));
  }
}

int moment_dim(MomentKind kind) noexcept {
  switch (kind) {
    case MomentKind::I2:
    case MomentKind::J2: return 2;
    case MomentKind::I3: return 3;
    case MomentKind::I4: return 4;
  }
  return 0;
}

namespace moment_kernels {

double i2(Activation act, double c11, double c12, double c22) {
  switch (act) {
    case Activation::Erf: return erf_i2(c11, c12, c22);
    case Activation::ReLU: return relu_closed_form::i2(c11, c12, c22);
    case Activation::Linear: return c12;
  }
  return 0.0;
}

double j2(Activation act, double c11, double c12, double c22) {
  switch (act) {
    case Activation::Erf: return erf_j2(c11, c12, c22);
    case Activation::ReLU: return relu_closed_form::j2(c11, c12, c22);
    case Activation::Linear: return 1.0;
  }
  return 0.0;
}

double i3(Activation act, const Eigen::Matrix3d& c) {
  switch (act) {
    case Activation::Erf: return erf_i3(c);
    case Activation::ReLU: return relu_closed_form::i3(c);
    case Activation::Linear: return c(1, 2);
  }
  return 0.0;
}

double i4(Activation act, const Eigen::Matrix4d& c) {
  switch (act) {
    case Activation::Erf: return erf_i4(c);
    case Activation::ReLU: return relu_i4(c);
    case Activation::Linear: return c(2, 3);
  }
  return 0.0;
}

}  // namespace moment_kernels

double i2(const CovBlock& cov, Activation act) {
  require_dim(cov, 2, "I2");
  return moment_kernels::i2(act, cov(0, 0), cov(0, 1), cov(1, 1));
}

double j2(const CovBlock& cov, Activation act) {
  require_dim(cov, 2, "J2");
  return moment_kernels::j2(act, cov(0, 0), cov(0, 1), cov(1, 1));
}

double i3(const CovBlock& cov, Activation act) {
  require_dim(cov, 3, "I3");
  return moment_kernels::i3(act, cov.matrix());
}

double i4(const CovBlock& cov, Activation act) {
  require_dim(cov, 4, "I4");
  return moment_kernels::i4(act, cov.matrix());
}

McEstimate mc_moment(MomentKind kind, const CovBlock& cov, Activation act,
                     std::int64_t n_samples, std::uint64_t seed) {
  if (n_samples < 1000) {
    throw Error(ErrorCode::InvalidArgument, "mc_moment needs at least 1000 samples");
  }
  const int dim = moment_dim(kind);
  require_dim(cov, dim, "mc_moment");

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov.matrix());
  const Eigen::MatrixXd root = eig.eigenvectors() *
                               eig.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal() *
                               eig.eigenvectors().transpose();

  GaussianSampler normal(seed);
  Eigen::Vector4d xi = Eigen::Vector4d::Zero();
  Eigen::Vector4d x = Eigen::Vector4d::Zero();
  // Welford accumulation
  double mean = 0.0;
  double m2 = 0.0;
  for (std::int64_t s = 0; s < n_samples; ++s) {
    for (int a = 0; a < dim; ++a) xi(a) = normal();
    for (int a = 0; a < dim; ++a) {
      double acc = 0.0;
      for (int b = 0; b < dim; ++b) acc += root(a, b) * xi(b);
      // zero-variance fields are pinned to exactly 0
      x(a) = cov(a, a) > 0.0 ? acc : 0.0;
    }
    double value = 0.0;
    switch (kind) {
      case MomentKind::I2: value = activate(act, x(0)) * activate(act, x(1)); break;
      case MomentKind::J2: value = activate_prime(act, x(0)) * activate_prime(act, x(1)); break;
      case MomentKind::I3: value = activate_prime(act, x(0)) * x(1) * activate(act, x(2)); break;
      case MomentKind::I4:
        value = activate_prime(act, x(0)) * activate_prime(act, x(1)) * activate(act, x(2)) *
                activate(act, x(3));
        break;
    }
    const double delta = value - mean;
    mean += delta / static_cast<double>(s + 1);
    m2 += delta * (value - mean);
  }
  const double n = static_cast<double>(n_samples);
  return McEstimate{mean, std::sqrt(m2 / (n - 1.0) / n)};
}

}  // namespace cflow
