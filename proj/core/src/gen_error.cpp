#include "cflow/gen_error.hpp"

#include <cmath>

#include "cflow/error.hpp"
#include "cflow/random.hpp"

namespace cflow {

double gen_error_unchecked(const MacroState& m, Activation act) {
  const Eigen::MatrixXd c = m.field_covariance();
  const Eigen::Index k = m.K();
  const Eigen::Index n = c.rows();
  Eigen::VectorXd a(n);
  a.head(k) = m.v;
  a.tail(m.M()) = -m.v_star;
  double total = 0.0;
  for (Eigen::Index p = 0; p < n; ++p) {
    if (a(p) == 0.0) continue;
    total += a(p) * a(p) * moment_kernels::i2(act, c(p, p), c(p, p), c(p, p));
    for (Eigen::Index q = p + 1; q < n; ++q) {
      if (a(q) == 0.0) continue;
      total += 2.0 * a(p) * a(q) * moment_kernels::i2(act, c(p, p), c(p, q), c(q, q));
    }
  }
  return 0.5 * total;
}

double gen_error_analytic(const MacroState& m, Activation act) {
  check_macro_state(m);
  return gen_error_unchecked(m, act);
}

McEstimate gen_error_mc(const NetworkParams& student, const NetworkParams& teacher,
                        Activation act, std::int64_t n_samples, std::uint64_t seed,
                        McInput input) {
  if (student.input_dim() != teacher.input_dim()) {
    throw Error(ErrorCode::DimensionMismatch, "student and teacher input dimensions differ");
  }
  if (n_samples < 1) throw Error(ErrorCode::InvalidArgument, "need at least one sample");

  const Eigen::Index n = student.input_dim();
  const Eigen::Index k = student.hidden_units();
  const Eigen::Index m = teacher.hidden_units();
  const double inv_sqrt_n = 1.0 / std::sqrt(static_cast<double>(n));

  RowMatrix stacked(k + m, n);
  stacked.topRows(k) = student.first_layer();
  stacked.bottomRows(m) = teacher.first_layer();

  // Map from the sampled Gaussian vector to the local fields. Rows are
  // formed one at a time from aligned copies and applied with plain loops,
  // so identical weight rows give bit-identical fields.
  Eigen::MatrixXd frame;
  if (input == McInput::Projected) {
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(stacked.transpose());
    frame = qr.householderQ() * Eigen::MatrixXd::Identity(n, qr.rank());
  }
  const Eigen::Index dim = input == McInput::Projected ? frame.cols() : n;
  RowMatrix to_fields(k + m, dim);
  Eigen::RowVectorXd row(n);
  for (Eigen::Index r = 0; r < k + m; ++r) {
    row = stacked.row(r);
    if (input == McInput::Projected) {
      to_fields.row(r) = (row * frame) * inv_sqrt_n;
    } else {
      to_fields.row(r) = row * inv_sqrt_n;
    }
  }

  GaussianSampler normal(seed);
  Eigen::VectorXd xi(dim);
  Eigen::VectorXd fields(k + m);
  const auto& v = student.second_layer();
  const auto& vs = teacher.second_layer();
  double mean = 0.0;
  double m2 = 0.0;
  for (std::int64_t s = 0; s < n_samples; ++s) {
    normal.fill({xi.data(), static_cast<std::size_t>(xi.size())});
    for (Eigen::Index r = 0; r < k + m; ++r) {
      const double* w = to_fields.data() + r * dim;
      double acc = 0.0;
      for (Eigen::Index c = 0; c < dim; ++c) acc += w[c] * xi(c);
      fields(r) = acc;
    }
    double phi_s = 0.0;
    double phi_t = 0.0;
    for (Eigen::Index i = 0; i < k; ++i) phi_s += v(i) * activate(act, fields(i));
    for (Eigen::Index j = 0; j < m; ++j) phi_t += vs(j) * activate(act, fields(k + j));
    const double diff = phi_s - phi_t;
    const double value = 0.5 * diff * diff;
    const double delta = value - mean;
    mean += delta / static_cast<double>(s + 1);
    m2 += delta * (value - mean);
  }
  const double count = static_cast<double>(n_samples);
  const double var = n_samples > 1 ? m2 / (count - 1.0) : 0.0;
  return McEstimate{mean, std::sqrt(var / count)};
}

}  // namespace cflow
