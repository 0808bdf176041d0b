#include "cflow/relu_moments.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>
#include <numbers>
#include <vector>

#include "cflow/error.hpp"

namespace cflow {

namespace {

constexpr double kPi = std::numbers::pi;
// Variances at or below this fraction of the largest input variance are
// treated as exactly zero (the field is pinned to 0).
constexpr double kZeroVariance = 1e-13;
// Correlations this close to +-1 are treated as duplicated / opposite fields.
constexpr double kUnitCorrelation = 1e-12;

struct Rule {
  std::vector<double> nodes;    // on [0, 1]
  std::vector<double> weights;  // sum to 1
};

// Gauss-Legendre via Golub-Welsch, mapped to [0, 1]; cached per node count.
const Rule& gauss_legendre(int n) {
  static std::mutex mutex;
  static std::map<int, Rule> cache;
  std::lock_guard<std::mutex> lock(mutex);
  auto it = cache.find(n);
  if (it != cache.end()) return it->second;

  Eigen::MatrixXd jacobi = Eigen::MatrixXd::Zero(n, n);
  for (int k = 1; k < n; ++k) {
    const double beta = k / std::sqrt(4.0 * k * k - 1.0);
    jacobi(k, k - 1) = beta;
    jacobi(k - 1, k) = beta;
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(jacobi);
  Rule rule;
  rule.nodes.resize(n);
  rule.weights.resize(n);
  for (int i = 0; i < n; ++i) {
    rule.nodes[i] = 0.5 * (eig.eigenvalues()(i) + 1.0);
    const double v0 = eig.eigenvectors()(0, i);
    rule.weights[i] = v0 * v0;  // 2 v0^2 on [-1, 1], halved for [0, 1]
  }
  return cache.emplace(n, std::move(rule)).first->second;
}

double clamp_unit(double r) { return std::clamp(r, -1.0, 1.0); }

double orthant2(double r12) { return 0.25 + std::asin(clamp_unit(r12)) / (2.0 * kPi); }

double orthant3(const Eigen::Matrix3d& r) {
  return 0.125 + (std::asin(clamp_unit(r(0, 1))) + std::asin(clamp_unit(r(0, 2))) +
                  std::asin(clamp_unit(r(1, 2)))) /
                     (4.0 * kPi);
}

// Plackett integral for a 4x4 correlation matrix without duplicated fields.
double orthant4(const Eigen::Matrix4d& r, int nodes) {
  const Rule& rule = gauss_legendre(nodes);
  double integral = 0.0;
  // t = 1 - s^2 removes the inverse-square-root endpoint behaviour of
  // phi_2 when some |rho_ij| is close to one.
  for (std::size_t q = 0; q < rule.nodes.size(); ++q) {
    const double s = rule.nodes[q];
    const double t = 1.0 - s * s;
    Eigen::Matrix4d rt = t * r;
    rt.diagonal().setOnes();
    double f = 0.0;
    for (int i = 0; i < 4; ++i) {
      for (int j = i + 1; j < 4; ++j) {
        const double rho = r(i, j);
        if (rho == 0.0) continue;
        const double rij = t * rho;
        const double phi2 = 1.0 / (2.0 * kPi * std::sqrt(1.0 - rij * rij));
        int k = -1;
        int l = -1;
        for (int a = 0; a < 4; ++a) {
          if (a == i || a == j) continue;
          (k < 0 ? k : l) = a;
        }
        // conditional covariance of (x_k, x_l) given x_i = x_j = 0
        Eigen::Matrix2d s_cc;
        s_cc << rt(i, i), rt(i, j), rt(j, i), rt(j, j);
        Eigen::Matrix2d s_rc;
        s_rc << rt(k, i), rt(k, j), rt(l, i), rt(l, j);
        Eigen::Matrix2d s_rr;
        s_rr << rt(k, k), rt(k, l), rt(l, k), rt(l, l);
        const Eigen::Matrix2d cond = s_rr - s_rc * s_cc.inverse() * s_rc.transpose();
        double p2 = 0.0;
        if (cond(0, 0) > 0.0 && cond(1, 1) > 0.0) {
          p2 = orthant2(cond(0, 1) / std::sqrt(cond(0, 0) * cond(1, 1)));
        }
        f += rho * phi2 * p2;
      }
    }
    integral += rule.weights[q] * f * 2.0 * s;
  }
  return 1.0 / 16.0 + integral;
}

Eigen::MatrixXd remove_index(const Eigen::MatrixXd& c, Eigen::Index drop) {
  const Eigen::Index n = c.rows();
  Eigen::MatrixXd out(n - 1, n - 1);
  for (Eigen::Index a = 0, ra = 0; a < n; ++a) {
    if (a == drop) continue;
    for (Eigen::Index b = 0, rb = 0; b < n; ++b) {
      if (b == drop) continue;
      out(ra, rb) = c(a, b);
      ++rb;
    }
    ++ra;
  }
  return out;
}

// Covariance of the other fields conditioned on x_b = 0, with b removed.
Eigen::MatrixXd condition_on_zero(const Eigen::MatrixXd& c, Eigen::Index b) {
  Eigen::MatrixXd cc = c - c.col(b) * c.row(b) / c(b, b);
  return remove_index(cc, b);
}

double expectation(Eigen::MatrixXd cov, std::vector<FieldFactor> f, double zero_var, int nodes) {
  // marginalise fields that do not appear
  for (Eigen::Index a = static_cast<Eigen::Index>(f.size()) - 1; a >= 0; --a) {
    if (f[a] == FieldFactor::None) {
      cov = remove_index(cov, a);
      f.erase(f.begin() + a);
    }
  }
  if (f.empty()) return 1.0;
  for (Eigen::Index a = 0; a < cov.rows(); ++a) {
    // theta(0) = relu(0) = 0 * anything = 0
    if (cov(a, a) <= zero_var) return 0.0;
  }

  Eigen::Index pivot = -1;
  for (Eigen::Index a = 0; a < static_cast<Eigen::Index>(f.size()); ++a) {
    if (f[a] == FieldFactor::Linear || f[a] == FieldFactor::Relu) {
      pivot = a;
      break;
    }
  }
  if (pivot < 0) return orthant_probability(cov, nodes);

  // E[x_p H] with H = (rest) * theta(x_p) for relu, (rest) for linear
  std::vector<FieldFactor> h = f;
  h[pivot] = (f[pivot] == FieldFactor::Relu) ? FieldFactor::Step : FieldFactor::None;

  double sum = 0.0;
  for (Eigen::Index b = 0; b < static_cast<Eigen::Index>(h.size()); ++b) {
    const double cpb = cov(pivot, b);
    if (cpb == 0.0) continue;
    switch (h[b]) {
      case FieldFactor::None:
        break;
      case FieldFactor::Linear: {
        std::vector<FieldFactor> d = h;
        d[b] = FieldFactor::None;
        sum += cpb * expectation(cov, std::move(d), zero_var, nodes);
        break;
      }
      case FieldFactor::Relu: {
        std::vector<FieldFactor> d = h;
        d[b] = FieldFactor::Step;
        sum += cpb * expectation(cov, std::move(d), zero_var, nodes);
        break;
      }
      case FieldFactor::Step: {
        // delta(x_b): density at zero times the conditional expectation
        std::vector<FieldFactor> d = h;
        d.erase(d.begin() + b);
        const double density = 1.0 / std::sqrt(2.0 * kPi * cov(b, b));
        sum += cpb * density * expectation(condition_on_zero(cov, b), std::move(d), zero_var, nodes);
        break;
      }
    }
  }
  return sum;
}

}  // namespace

double orthant_probability(const Eigen::MatrixXd& cov, int nodes) {
  const Eigen::Index n = cov.rows();
  if (n != cov.cols() || n > 4) {
    throw Error(ErrorCode::InvalidArgument, "orthant probability supports up to 4 fields");
  }
  if (nodes < 2) throw Error(ErrorCode::InvalidArgument, "need at least 2 quadrature nodes");
  if (n == 0) return 1.0;
  for (Eigen::Index a = 0; a < n; ++a) {
    if (!(cov(a, a) > 0.0)) return 0.0;
  }
  const Eigen::VectorXd inv_sd = cov.diagonal().cwiseSqrt().cwiseInverse();
  Eigen::MatrixXd r = inv_sd.asDiagonal() * cov * inv_sd.asDiagonal();
  r.diagonal().setOnes();

  // duplicated fields collapse, opposite fields cannot both be positive
  for (Eigen::Index a = 0; a < r.rows(); ++a) {
    for (Eigen::Index b = a + 1; b < r.rows(); ++b) {
      if (r(a, b) <= -1.0 + kUnitCorrelation) return 0.0;
      if (r(a, b) >= 1.0 - kUnitCorrelation) {
        return orthant_probability(remove_index(r, b), nodes);
      }
    }
  }
  switch (r.rows()) {
    case 1: return 0.5;
    case 2: return orthant2(r(0, 1));
    case 3: return orthant3(r);
    default: return orthant4(r, nodes);
  }
}

double gaussian_piecewise_expectation(const Eigen::MatrixXd& cov,
                                      std::span<const FieldFactor> factors, int nodes) {
  if (cov.rows() != cov.cols() || cov.rows() != static_cast<Eigen::Index>(factors.size())) {
    throw Error(ErrorCode::DimensionMismatch, "one factor per field required");
  }
  const double scale = cov.rows() > 0 ? cov.diagonal().maxCoeff() : 0.0;
  const double zero_var = kZeroVariance * std::max(scale, 0.0);
  return expectation(cov, std::vector<FieldFactor>(factors.begin(), factors.end()), zero_var,
                     nodes);
}

namespace relu_closed_form {

double i2(double c11, double c12, double c22) {
  if (c11 <= 0.0 || c22 <= 0.0) return 0.0;
  const double det = std::max(c11 * c22 - c12 * c12, 0.0);
  return c12 * orthant2(c12 / std::sqrt(c11 * c22)) + std::sqrt(det) / (2.0 * kPi);
}

double j2(double c11, double c12, double c22) {
  if (c11 <= 0.0 || c22 <= 0.0) return 0.0;
  return orthant2(c12 / std::sqrt(c11 * c22));
}

double i3(const Eigen::Matrix3d& c) {
  const double c11 = c(0, 0);
  const double c33 = c(2, 2);
  if (c11 <= 0.0 || c33 <= 0.0) return 0.0;
  const double det = std::max(c11 * c33 - c(0, 2) * c(0, 2), 0.0);
  return c(0, 1) * std::sqrt(det) / (2.0 * kPi * c11) +
         c(1, 2) * orthant2(c(0, 2) / std::sqrt(c11 * c33));
}

}  // namespace relu_closed_form

}  // namespace cflow
