#pragma once

#include <span>

#include <Eigen/Dense>

namespace cflow {

/// How a single Gaussian field enters a product under the expectation.
enum class FieldFactor {
  None,    // absent
  Step,    // theta(x), with theta(0) = 0
  Relu,    // max(x, 0)
  Linear,  // x
};

/// Default number of Gauss-Legendre nodes for the one-dimensional integral
/// that remains for four-dimensional orthant probabilities.
inline constexpr int kDefaultOrthantNodes = 64;

/// P(x_1 > 0, ..., x_n > 0) for x ~ N(0, cov), n <= 4. Dimensions up to 3 are
/// closed form; n = 4 integrates Plackett's identity
///   dP/drho_ij = phi_2(0, 0; rho_ij) P(rest > 0 | x_i = x_j = 0)
/// along rho(t) = t * rho from the independent case.
double orthant_probability(const Eigen::MatrixXd& cov, int nodes = kDefaultOrthantNodes);

/// E[prod_a f_a(x_a)] for x ~ N(0, cov) and piecewise-linear factors.
/// Linear and Relu factors are removed one at a time with Stein's identity
///   E[x_a H(x)] = sum_b cov_ab E[d_b H(x)],
/// where d_b theta(x_b) = delta(x_b) is handled by conditioning on x_b = 0.
/// The recursion ends in orthant probabilities. Fields of zero variance are
/// pinned to 0.
double gaussian_piecewise_expectation(const Eigen::MatrixXd& cov,
                                      std::span<const FieldFactor> factors,
                                      int nodes = kDefaultOrthantNodes);

/// Closed forms that the recursion produces for the two- and three-field
/// ReLU moments; used directly in the ODE right-hand side.
namespace relu_closed_form {

double i2(double c11, double c12, double c22);
double j2(double c11, double c12, double c22);
double i3(const Eigen::Matrix3d& c);

}  // namespace relu_closed_form

}  // namespace cflow
