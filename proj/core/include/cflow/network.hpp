#pragma once

#include <cstdint>

#include <Eigen/Dense>

#include "cflow/activation.hpp"

namespace cflow {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Weights of a two-layer network phi(x) = sum_h v_h g(w_h . x / sqrt(N)).
/// Rows of the first layer are the hidden-unit weight vectors.
class NetworkParams {
 public:
  /// Throws DimensionMismatch if rows(first_layer) != size(second_layer) or
  /// either is empty, NonFinite if any entry is NaN/inf.
  NetworkParams(RowMatrix first_layer, Eigen::VectorXd second_layer);

  const RowMatrix& first_layer() const noexcept { return w_; }
  const Eigen::VectorXd& second_layer() const noexcept { return v_; }
  Eigen::Index hidden_units() const noexcept { return w_.rows(); }
  Eigen::Index input_dim() const noexcept { return w_.cols(); }

 private:
  RowMatrix w_;
  Eigen::VectorXd v_;
};

/// Order parameters of a teacher/student pair:
///   R (K x M) student-teacher overlaps, Q (K x K), T (M x M) self-overlaps,
///   v (K) and v_star (M) second-layer weights.
struct MacroState {
  Eigen::MatrixXd R;
  Eigen::MatrixXd Q;
  Eigen::MatrixXd T;
  Eigen::VectorXd v;
  Eigen::VectorXd v_star;

  Eigen::Index K() const noexcept { return Q.rows(); }
  Eigen::Index M() const noexcept { return T.rows(); }

  /// (K+M) x (K+M) covariance of the local fields [[Q, R], [R^T, T]].
  Eigen::MatrixXd field_covariance() const;
};

/// Shape checks plus symmetry of Q, T (1e-12) and PSD of the field
/// covariance (smallest eigenvalue >= -tolerance). Throws cflow::Error.
void check_macro_state(const MacroState& m, double psd_tolerance = 1e-9);

/// phi(x) for the given weights; no output noise.
double forward(const NetworkParams& params, const Eigen::Ref<const Eigen::VectorXd>& x,
               Activation act);

/// R = w w*^T / N, Q = w w^T / N, T = w* w*^T / N.
MacroState measure_macro(const NetworkParams& student, const NetworkParams& teacher);

/// Rows i.i.d. N(0, variance); second layer set to `second_layer_value`.
NetworkParams random_network(Eigen::Index hidden, Eigen::Index input_dim, double variance,
                             double second_layer_value, std::uint64_t seed);

/// Rows mutually orthogonal with squared norm N, so that T is exactly the
/// identity. Requires hidden <= input_dim.
NetworkParams orthonormal_teacher(Eigen::Index hidden, Eigen::Index input_dim,
                                  double second_layer_value, std::uint64_t seed);

struct NetworkPair {
  NetworkParams student;
  NetworkParams teacher;
};

/// Builds student and teacher weights in dimension N whose measured order
/// parameters equal (R, Q, T) of `target` up to round-off: the Gram matrix is
/// factorised and its factor is embedded along a random orthonormal frame.
NetworkPair embed_macro_state(const MacroState& target, Eigen::Index input_dim,
                              std::uint64_t seed);

}  // namespace cflow
