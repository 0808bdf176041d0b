#include "cflow/network.hpp"

#include <cmath>
#include <string>

#include "cflow/error.hpp"
#include "cflow/random.hpp"

namespace cflow {

NetworkParams::NetworkParams(RowMatrix first_layer, Eigen::VectorXd second_layer)
    : w_(std::move(first_layer)), v_(std::move(second_layer)) {
  if (w_.rows() < 1 || w_.cols() < 1) {
    throw Error(ErrorCode::DimensionMismatch, "network needs at least one hidden unit and input");
  }
  if (w_.rows() != v_.size()) {
    throw Error(ErrorCode::DimensionMismatch,
                "first layer has " + std::to_string(w_.rows()) + " rows but second layer has " +
                    std::to_string(v_.size()) + " entries");
  }
  if (!w_.allFinite() || !v_.allFinite()) {
    throw Error(ErrorCode::NonFinite, "network weights contain NaN or inf");
  }
}

Eigen::MatrixXd MacroState::field_covariance() const {
  const Eigen::Index k = K();
  const Eigen::Index m = M();
  Eigen::MatrixXd c(k + m, k + m);
  c.topLeftCorner(k, k) = Q;
  c.topRightCorner(k, m) = R;
  c.bottomLeftCorner(m, k) = R.transpose();
  c.bottomRightCorner(m, m) = T;
  return c;
}

void check_macro_state(const MacroState& m, double psd_tolerance) {
  const Eigen::Index k = m.Q.rows();
  const Eigen::Index mm = m.T.rows();
  if (k < 1 || mm < 1 || m.Q.cols() != k || m.T.cols() != mm || m.R.rows() != k ||
      m.R.cols() != mm || m.v.size() != k || m.v_star.size() != mm) {
    throw Error(ErrorCode::DimensionMismatch, "inconsistent order-parameter shapes");
  }
  if (!m.R.allFinite() || !m.Q.allFinite() || !m.T.allFinite() || !m.v.allFinite() ||
      !m.v_star.allFinite()) {
    throw Error(ErrorCode::NonFinite, "order parameters contain NaN or inf");
  }
  const double asym_q = (m.Q - m.Q.transpose()).cwiseAbs().maxCoeff();
  const double asym_t = (m.T - m.T.transpose()).cwiseAbs().maxCoeff();
  if (asym_q > 1e-12 || asym_t > 1e-12) {
    throw Error(ErrorCode::InvalidArgument, "Q or T is not symmetric");
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(m.field_covariance(),
                                                     Eigen::EigenvaluesOnly);
  const double lowest = eig.eigenvalues()(0);
  if (lowest < -psd_tolerance) {
    throw Error(ErrorCode::NotPositiveSemidefinite,
                "field covariance has eigenvalue " + std::to_string(lowest));
  }
}

double forward(const NetworkParams& params, const Eigen::Ref<const Eigen::VectorXd>& x,
               Activation act) {
  if (x.size() != params.input_dim()) {
    throw Error(ErrorCode::DimensionMismatch,
                "input has length " + std::to_string(x.size()) + ", network expects " +
                    std::to_string(params.input_dim()));
  }
  const double scale = 1.0 / std::sqrt(static_cast<double>(params.input_dim()));
  const Eigen::VectorXd fields = (params.first_layer() * x) * scale;
  double out = 0.0;
  for (Eigen::Index h = 0; h < fields.size(); ++h) {
    out += params.second_layer()(h) * activate(act, fields(h));
  }
  return out;
}

MacroState measure_macro(const NetworkParams& student, const NetworkParams& teacher) {
  if (student.input_dim() != teacher.input_dim()) {
    throw Error(ErrorCode::DimensionMismatch, "student and teacher input dimensions differ");
  }
  const double inv_n = 1.0 / static_cast<double>(student.input_dim());
  const auto& w = student.first_layer();
  const auto& ws = teacher.first_layer();
  MacroState m;
  m.R = (w * ws.transpose()) * inv_n;
  m.Q = (w * w.transpose()) * inv_n;
  m.T = (ws * ws.transpose()) * inv_n;
  // exact symmetry, the products above can differ in the last bit
  m.Q = 0.5 * (m.Q + m.Q.transpose()).eval();
  m.T = 0.5 * (m.T + m.T.transpose()).eval();
  m.v = student.second_layer();
  m.v_star = teacher.second_layer();
  return m;
}

NetworkParams random_network(Eigen::Index hidden, Eigen::Index input_dim, double variance,
                             double second_layer_value, std::uint64_t seed) {
  if (variance < 0.0) throw Error(ErrorCode::InvalidArgument, "negative weight variance");
  GaussianSampler normal(seed);
  RowMatrix w(hidden, input_dim);
  const double sd = std::sqrt(variance);
  for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = sd * normal();
  return NetworkParams(std::move(w), Eigen::VectorXd::Constant(hidden, second_layer_value));
}

namespace {

// N x r matrix with orthonormal columns, drawn uniformly (QR of a Gaussian).
Eigen::MatrixXd random_frame(Eigen::Index n, Eigen::Index r, std::uint64_t seed) {
  GaussianSampler normal(seed);
  Eigen::MatrixXd g(n, r);
  for (Eigen::Index i = 0; i < g.size(); ++i) g.data()[i] = normal();
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
  return qr.householderQ() * Eigen::MatrixXd::Identity(n, r);
}

}  // namespace

NetworkParams orthonormal_teacher(Eigen::Index hidden, Eigen::Index input_dim,
                                  double second_layer_value, std::uint64_t seed) {
  if (hidden > input_dim) {
    throw Error(ErrorCode::DimensionMismatch, "cannot fit more orthogonal rows than inputs");
  }
  const Eigen::MatrixXd frame = random_frame(input_dim, hidden, seed);
  RowMatrix w = frame.transpose() * std::sqrt(static_cast<double>(input_dim));
  return NetworkParams(std::move(w), Eigen::VectorXd::Constant(hidden, second_layer_value));
}

NetworkPair embed_macro_state(const MacroState& target, Eigen::Index input_dim,
                              std::uint64_t seed) {
  check_macro_state(target);
  const Eigen::Index k = target.K();
  const Eigen::Index m = target.M();
  const Eigen::Index r = k + m;
  if (input_dim < r) {
    throw Error(ErrorCode::DimensionMismatch, "input dimension smaller than K + M");
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(target.field_covariance());
  const Eigen::VectorXd root = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  const Eigen::MatrixXd factor = eig.eigenvectors() * root.asDiagonal();  // G = F F^T
  const Eigen::MatrixXd frame = random_frame(input_dim, r, seed);
  const RowMatrix rows =
      (factor * frame.transpose()) * std::sqrt(static_cast<double>(input_dim));
  return NetworkPair{NetworkParams(rows.topRows(k), target.v),
                     NetworkParams(rows.bottomRows(m), target.v_star)};
}

}  // namespace cflow
