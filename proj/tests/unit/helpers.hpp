#pragma once

#include <cmath>
#include <cstdint>

#include <Eigen/Dense>

#include <boost/random/uniform_real_distribution.hpp>

#include "cflow/network.hpp"
#include "cflow/random.hpp"

namespace cflow::testing {

/// Random network with rows ~ N(0, variance) and second layer ~ U[0.5, 1.5].
inline NetworkParams random_net(Eigen::Index hidden, Eigen::Index n, double variance,
                                std::uint64_t seed) {
  GaussianSampler normal(seed);
  RowMatrix w(hidden, n);
  for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = std::sqrt(variance) * normal();
  Eigen::VectorXd v(hidden);
  for (Eigen::Index i = 0; i < hidden; ++i) v(i) = 1.0 + 0.5 * std::tanh(normal());
  return NetworkParams(std::move(w), std::move(v));
}

/// Random covariance with diagonal in [0.1, 3]: a normalised Wishart
/// correlation matrix rescaled by the drawn standard deviations.
inline Eigen::MatrixXd random_cov(int dim, Rng& rng) {
  boost::random::normal_distribution<double> normal;
  boost::random::uniform_real_distribution<double> diag(0.1, 3.0);
  Eigen::MatrixXd a(dim, dim + 2);
  for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = normal(rng);
  Eigen::MatrixXd c = a * a.transpose();
  const Eigen::VectorXd d = c.diagonal().cwiseSqrt().cwiseInverse();
  c = d.asDiagonal() * c * d.asDiagonal();
  Eigen::VectorXd s(dim);
  for (int i = 0; i < dim; ++i) {
    s(i) = std::sqrt(diag(rng));
  }
  c = s.asDiagonal() * c * s.asDiagonal();
  return 0.5 * (c + c.transpose());
}

inline double rel_diff(double a, double b) {
  return std::abs(a - b) / std::max(std::abs(b), 1e-300);
}

}  // namespace cflow::testing
