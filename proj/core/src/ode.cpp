#include "cflow/ode.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "cflow/error.hpp"
#include "cflow/gen_error.hpp"
#include "cflow/moments.hpp"

namespace cflow {

OdeConfig validated(OdeConfig cfg) {
  if (cfg.M < 1 || cfg.K < 1) throw Error(ErrorCode::Config, "M and K must be positive");
  if (!(cfg.d_alpha > 0.0)) throw Error(ErrorCode::Config, "d_alpha must be positive");
  if (cfg.eta_w < 0.0 || cfg.eta_v < 0.0 || cfg.sigma < 0.0) {
    throw Error(ErrorCode::Config, "learning rates and sigma must be non-negative");
  }
  if (cfg.mode == TrainMode::SCM) cfg.eta_v = 0.0;
  return cfg;
}

namespace {

inline Eigen::Matrix3d sub3(const Eigen::MatrixXd& c, Eigen::Index a, Eigen::Index b,
                            Eigen::Index d) {
  Eigen::Matrix3d s;
  s << c(a, a), c(a, b), c(a, d),
       c(b, a), c(b, b), c(b, d),
       c(d, a), c(d, b), c(d, d);
  return s;
}

inline Eigen::Matrix4d sub4(const Eigen::MatrixXd& c, Eigen::Index a, Eigen::Index b,
                            Eigen::Index d, Eigen::Index e) {
  const Eigen::Index idx[4] = {a, b, d, e};
  Eigen::Matrix4d s;
  for (int x = 0; x < 4; ++x) {
    for (int y = 0; y < 4; ++y) s(x, y) = c(idx[x], idx[y]);
  }
  return s;
}

}  // namespace

MacroState full_rhs(const MacroState& m, const OdeConfig& cfg) {
  if (m.K() != cfg.K || m.M() != cfg.M) {
    throw Error(ErrorCode::DimensionMismatch, "state shape does not match OdeConfig (K, M)");
  }
  const Eigen::Index k = m.K();
  const Eigen::Index mm = m.M();
  const Eigen::Index n = k + mm;
  const Activation act = cfg.activation;
  const double eta = cfg.eta_w;
  const double eta_v = cfg.mode == TrainMode::SCM ? 0.0 : cfg.eta_v;
  const double sigma2 = cfg.sigma * cfg.sigma;
  const Eigen::MatrixXd c = m.field_covariance();

  Eigen::VectorXd a(n);
  a.head(k) = m.v;
  a.tail(mm) = -m.v_star;

  // s3(i, b) = sum_p a_p I3(i, b, p): drift of student i along field b
  Eigen::MatrixXd s3 = Eigen::MatrixXd::Zero(k, n);
  for (Eigen::Index i = 0; i < k; ++i) {
    for (Eigen::Index b = 0; b < n; ++b) {
      double acc = 0.0;
      for (Eigen::Index p = 0; p < n; ++p) {
        if (a(p) == 0.0) continue;
        acc += a(p) * moment_kernels::i3(act, sub3(c, i, b, p));
      }
      s3(i, b) = acc;
    }
  }

  MacroState d;
  d.R.resize(k, mm);
  d.Q.resize(k, k);
  d.T = Eigen::MatrixXd::Zero(mm, mm);
  d.v = Eigen::VectorXd::Zero(k);
  d.v_star = Eigen::VectorXd::Zero(mm);

  for (Eigen::Index i = 0; i < k; ++i) {
    for (Eigen::Index nn = 0; nn < mm; ++nn) d.R(i, nn) = -eta * m.v(i) * s3(i, k + nn);
  }

  for (Eigen::Index i = 0; i < k; ++i) {
    for (Eigen::Index j = i; j < k; ++j) {
      double dq = -eta * (m.v(i) * s3(i, j) + m.v(j) * s3(j, i));
      const double vv = m.v(i) * m.v(j);
      if (vv != 0.0 && eta != 0.0) {
        double quad = 0.0;
        for (Eigen::Index p = 0; p < n; ++p) {
          if (a(p) == 0.0) continue;
          quad += a(p) * a(p) * moment_kernels::i4(act, sub4(c, i, j, p, p));
          for (Eigen::Index q = p + 1; q < n; ++q) {
            if (a(q) == 0.0) continue;
            quad += 2.0 * a(p) * a(q) * moment_kernels::i4(act, sub4(c, i, j, p, q));
          }
        }
        if (sigma2 != 0.0) quad += sigma2 * moment_kernels::j2(act, c(i, i), c(i, j), c(j, j));
        dq += eta * eta * vv * quad;
      }
      d.Q(i, j) = dq;
      d.Q(j, i) = dq;
    }
  }

  if (eta_v != 0.0) {
    for (Eigen::Index i = 0; i < k; ++i) {
      double acc = 0.0;
      for (Eigen::Index p = 0; p < n; ++p) {
        if (a(p) == 0.0) continue;
        acc += a(p) * moment_kernels::i2(act, c(i, i), c(i, p), c(p, p));
      }
      d.v(i) = -eta_v * acc;
    }
  }
  return d;
}

Eigen::VectorXd pack_dynamic(const MacroState& m) {
  const Eigen::Index k = m.K();
  const Eigen::Index mm = m.M();
  Eigen::VectorXd y(k * mm + k * (k + 1) / 2 + k);
  Eigen::Index pos = 0;
  for (Eigen::Index i = 0; i < k; ++i) {
    for (Eigen::Index n = 0; n < mm; ++n) y(pos++) = m.R(i, n);
  }
  for (Eigen::Index i = 0; i < k; ++i) {
    for (Eigen::Index j = i; j < k; ++j) y(pos++) = m.Q(i, j);
  }
  for (Eigen::Index i = 0; i < k; ++i) y(pos++) = m.v(i);
  return y;
}

MacroState unpack_dynamic(const Eigen::VectorXd& y, const MacroState& frame) {
  const Eigen::Index k = frame.K();
  const Eigen::Index mm = frame.M();
  if (y.size() != k * mm + k * (k + 1) / 2 + k) {
    throw Error(ErrorCode::DimensionMismatch, "packed state has the wrong length");
  }
  MacroState m;
  m.R.resize(k, mm);
  m.Q.resize(k, k);
  m.v.resize(k);
  m.T = frame.T;
  m.v_star = frame.v_star;
  Eigen::Index pos = 0;
  for (Eigen::Index i = 0; i < k; ++i) {
    for (Eigen::Index n = 0; n < mm; ++n) m.R(i, n) = y(pos++);
  }
  for (Eigen::Index i = 0; i < k; ++i) {
    for (Eigen::Index j = i; j < k; ++j) {
      m.Q(i, j) = y(pos);
      m.Q(j, i) = y(pos++);
    }
  }
  for (Eigen::Index i = 0; i < k; ++i) m.v(i) = y(pos++);
  return m;
}

Eigen::VectorXd integrator_step(const VectorField& f, const Eigen::VectorXd& y, double h,
                                Integrator method) {
  if (method == Integrator::Euler) return y + h * f(y);
  const Eigen::VectorXd k1 = f(y);
  const Eigen::VectorXd k2 = f(y + 0.5 * h * k1);
  const Eigen::VectorXd k3 = f(y + 0.5 * h * k2);
  const Eigen::VectorXd k4 = f(y + h * k3);
  return y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

VectorTrajectory integrate_vector(const VectorField& f, Eigen::VectorXd y0, double d_alpha,
                                  double alpha_max, Integrator method, std::int64_t record_every) {
  if (!(d_alpha > 0.0)) throw Error(ErrorCode::InvalidArgument, "d_alpha must be positive");
  if (record_every < 1) throw Error(ErrorCode::InvalidArgument, "record_every must be >= 1");
  constexpr double kBlowUp = 1e6;

  VectorTrajectory out;
  const auto steps = static_cast<std::int64_t>(std::ceil(alpha_max / d_alpha - 1e-9));
  out.points.push_back({0.0, y0});
  Eigen::VectorXd y = std::move(y0);
  for (std::int64_t s = 1; s <= steps; ++s) {
    try {
      y = integrator_step(f, y, d_alpha, method);
    } catch (const Error& e) {
      out.aborted = true;
      out.diagnostic = "step " + std::to_string(s) + ": " + e.what();
      return out;
    }
    const double alpha = static_cast<double>(s) * d_alpha;
    if (!y.allFinite() || y.cwiseAbs().maxCoeff() > kBlowUp) {
      out.aborted = true;
      out.diagnostic = "state blew up at alpha = " + std::to_string(alpha);
      out.points.push_back({alpha, y});
      return out;
    }
    if (s % record_every == 0 || s == steps) out.points.push_back({alpha, y});
  }
  return out;
}

Trajectory integrate(const MacroState& initial, const OdeConfig& raw_cfg, double alpha_max,
                     std::int64_t record_every) {
  const OdeConfig cfg = validated(raw_cfg);
  check_macro_state(initial);
  const MacroState frame = initial;
  const VectorField f = [&](const Eigen::VectorXd& y) {
    return pack_dynamic(full_rhs(unpack_dynamic(y, frame), cfg));
  };
  VectorTrajectory raw =
      integrate_vector(f, pack_dynamic(initial), cfg.d_alpha, alpha_max, cfg.integrator, record_every);

  Trajectory out;
  out.aborted = raw.aborted;
  out.diagnostic = raw.diagnostic;
  out.points.reserve(raw.points.size());
  for (StatePoint& p : raw.points) {
    MacroState m = unpack_dynamic(p.state, frame);
    double eg = std::numeric_limits<double>::quiet_NaN();
    if (m.R.allFinite() && m.Q.allFinite() && m.v.allFinite()) {
      try {
        eg = gen_error_unchecked(m, cfg.activation);
      } catch (const Error& e) {
        if (!out.aborted) {
          out.aborted = true;
          out.diagnostic = std::string("eg evaluation failed: ") + e.what();
        }
      }
    }
    out.points.push_back({p.alpha, std::move(m), eg});
  }
  return out;
}

}  // namespace cflow
