#include "cflow/perturbative.hpp"

#include <cmath>
#include <limits>
#include <vector>

#include "cflow/error.hpp"
#include "cflow/gen_error.hpp"
#include "cflow/ode.hpp"
#include "cflow/reduced.hpp"

namespace cflow {

namespace {

constexpr double kSvdThreshold = 1e-8;
constexpr double kResidualTolerance = 1e-6;

PerturbativeProblem scm_problem(const ReducedScmSystem& sys, double eta) {
  if (sys.activation == Activation::ReLU) {
    throw Error(ErrorCode::InvalidArgument,
                "perturbative solve needs a smooth eg at the fixed point (Erf or Linear)");
  }
  const std::array<bool, 8> active = scm_active(sys.M, sys.L);
  std::vector<int> idx;
  for (int k = 0; k < 8; ++k) {
    if (active[static_cast<std::size_t>(k)]) idx.push_back(k);
  }
  const auto expand = [idx](const Eigen::VectorXd& x) {
    std::array<double, 8> a{};
    for (std::size_t k = 0; k < idx.size(); ++k) a[static_cast<std::size_t>(idx[k])] = x(static_cast<Eigen::Index>(k));
    return scm_from_array(a);
  };
  const auto compress = [idx](const ReducedScmState& s) {
    const std::array<double, 8> a = to_array(s);
    Eigen::VectorXd x(static_cast<Eigen::Index>(idx.size()));
    for (std::size_t k = 0; k < idx.size(); ++k) x(static_cast<Eigen::Index>(k)) = a[static_cast<std::size_t>(idx[k])];
    return x;
  };

  PerturbativeProblem p;
  p.x0 = compress(scm_fixed_point());
  p.rhs = [=](const Eigen::VectorXd& x, double sigma2) {
    return compress(reduced_scm_rhs(expand(x), sys.M, sys.L, eta, std::sqrt(sigma2), sys.activation));
  };
  p.eg = [=](const Eigen::VectorXd& x) {
    return gen_error_unchecked(embed_scm(expand(x), sys.M, sys.L), sys.activation);
  };
  return p;
}

PerturbativeProblem denoising_problem(const DenoisingSystem& sys, double eta, double v_star) {
  const bool groups = sys.M >= 2;
  const auto expand = [groups](const Eigen::VectorXd& x) {
    DenoisingState s;
    s.Q = x(0);
    s.R = x(1);
    s.v = x(2);
    if (groups) {
      s.C = x(3);
      s.S = x(4);
    }
    return s;
  };
  const auto compress = [groups](const DenoisingState& s) {
    Eigen::VectorXd x(groups ? 5 : 3);
    x(0) = s.Q;
    x(1) = s.R;
    x(2) = s.v;
    if (groups) {
      x(3) = s.C;
      x(4) = s.S;
    }
    return x;
  };
  PerturbativeProblem p;
  p.x0 = compress(denoising_fixed_point(sys.Z, v_star));
  p.rhs = [=](const Eigen::VectorXd& x, double sigma2) {
    return compress(denoising_rhs(expand(x), sys.M, sys.Z, eta, eta, std::sqrt(sigma2), v_star));
  };
  p.eg = [=](const Eigen::VectorXd& x) {
    return gen_error_unchecked(embed_denoising(expand(x), sys.M, sys.Z, v_star), Activation::Erf);
  };
  return p;
}

PerturbativeProblem perceptron_problem(const PerceptronSystem& sys, double eta) {
  if (!(sys.T > 0.0)) throw Error(ErrorCode::InvalidArgument, "perceptron teacher norm must be > 0");
  const double t = sys.T;
  const auto embed = [t](const Eigen::VectorXd& x) {
    MacroState m;
    m.R = Eigen::MatrixXd::Constant(1, 1, x(0));
    m.Q = Eigen::MatrixXd::Constant(1, 1, x(1));
    m.T = Eigen::MatrixXd::Constant(1, 1, t);
    m.v = Eigen::VectorXd::Ones(1);
    m.v_star = Eigen::VectorXd::Ones(1);
    return m;
  };
  PerturbativeProblem p;
  p.x0 = Eigen::Vector2d(t, t);
  p.rhs = [=](const Eigen::VectorXd& x, double sigma2) {
    OdeConfig cfg;
    cfg.eta_w = eta;
    cfg.sigma = std::sqrt(sigma2);
    const MacroState d = full_rhs(embed(x), cfg);
    return Eigen::VectorXd(Eigen::Vector2d(d.R(0, 0), d.Q(0, 0)));
  };
  p.eg = [=](const Eigen::VectorXd& x) { return gen_error_unchecked(embed(x), Activation::Erf); };
  return p;
}

}  // namespace

PerturbativeProblem make_problem(const PerturbativeSystem& system, double eta, double v_star) {
  if (!(eta > 0.0)) throw Error(ErrorCode::InvalidArgument, "eta must be positive");
  return std::visit(
      [&](const auto& sys) -> PerturbativeProblem {
        using S = std::decay_t<decltype(sys)>;
        if constexpr (std::is_same_v<S, ReducedScmSystem>) {
          return scm_problem(sys, eta);
        } else if constexpr (std::is_same_v<S, DenoisingSystem>) {
          return denoising_problem(sys, eta, v_star);
        } else {
          return perceptron_problem(sys, eta);
        }
      },
      system);
}

Eigen::MatrixXd numeric_jacobian(const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& f,
                                 const Eigen::VectorXd& x, double rel_step) {
  const Eigen::Index n = x.size();
  Eigen::MatrixXd jac;
  for (Eigen::Index j = 0; j < n; ++j) {
    const double h = rel_step * std::max(std::abs(x(j)), 1.0);
    Eigen::VectorXd xp = x;
    Eigen::VectorXd xm = x;
    xp(j) += h;
    xm(j) -= h;
    const Eigen::VectorXd col = (f(xp) - f(xm)) / (2.0 * h);
    if (j == 0) jac.resize(col.size(), n);
    jac.col(j) = col;
  }
  return jac;
}

PerturbativeResult perturbative_solve(const PerturbativeSystem& system, double eta, double sigma,
                                      double v_star) {
  const PerturbativeProblem p = make_problem(system, eta, v_star);
  const auto f0 = [&](const Eigen::VectorXd& x) { return p.rhs(x, 0.0); };

  const Eigen::MatrixXd jac = numeric_jacobian(f0, p.x0);
  const Eigen::VectorXd b = p.rhs(p.x0, 1.0) - f0(p.x0);

  Eigen::JacobiSVD<Eigen::MatrixXd> svd(jac, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Eigen::VectorXd sv = svd.singularValues();
  const double smax = sv.size() ? sv(0) : 0.0;
  if (!(smax > 0.0)) throw Error(ErrorCode::SingularJacobian, "Jacobian vanishes at the fixed point");

  PerturbativeResult out;
  out.x0 = p.x0;
  const double smin = sv(sv.size() - 1);
  out.condition = smin > 0.0 ? smax / smin : std::numeric_limits<double>::infinity();

  const Eigen::VectorXd ub = svd.matrixU().transpose() * (-b);
  Eigen::VectorXd coeff = Eigen::VectorXd::Zero(sv.size());
  for (Eigen::Index k = 0; k < sv.size(); ++k) {
    if (sv(k) > kSvdThreshold * smax) {
      coeff(k) = ub(k) / sv(k);
      ++out.rank;
    }
  }
  out.x1 = svd.matrixV() * coeff;
  const double residual = (jac * out.x1 + b).norm();
  if (residual > kResidualTolerance * std::max(b.norm(), 1e-300)) {
    throw Error(ErrorCode::SingularJacobian,
                "linearised fixed-point equation has no solution (condition number " +
                    std::to_string(out.condition) + ")");
  }

  const double h = 1e-6 / std::max(out.x1.cwiseAbs().maxCoeff(), 1.0);
  out.eg_slope = (p.eg(p.x0 + h * out.x1) - p.eg(p.x0 - h * out.x1)) / (2.0 * h);
  out.eg = sigma * sigma * out.eg_slope;
  return out;
}

double perturbative_eg(const PerturbativeSystem& system, double eta, double sigma, double v_star) {
  if (sigma == 0.0) return 0.0;
  return perturbative_solve(system, eta, sigma, v_star).eg;
}

}  // namespace cflow
