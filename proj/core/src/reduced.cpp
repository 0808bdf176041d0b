#include "cflow/reduced.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "cflow/error.hpp"
#include "cflow/ode.hpp"

namespace cflow {

namespace {

void check_sizes(int M, int L) {
  if (M < 1 || L < 0) throw Error(ErrorCode::InvalidArgument, "need M >= 1 and L >= 0");
}

// Mean-and-spread accumulator for one block of entries.
struct Block {
  double sum = 0.0;
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  int count = 0;
  void add(double x) {
    sum += x;
    lo = std::min(lo, x);
    hi = std::max(hi, x);
    ++count;
  }
  double mean() const { return count ? sum / count : 0.0; }
  double spread() const { return count ? hi - lo : 0.0; }
};

void check_blocks(const std::vector<std::pair<const char*, const Block*>>& blocks, double scale,
                  double tol) {
  for (const auto& [name, b] : blocks) {
    if (b->spread() > tol * (1.0 + scale)) {
      throw Error(ErrorCode::ManifoldViolation,
                  std::string("block ") + name + " is not constant (spread " +
                      std::to_string(b->spread()) + ")");
    }
  }
}

double max_abs(const Eigen::MatrixXd& a) { return a.size() ? a.cwiseAbs().maxCoeff() : 0.0; }

}  // namespace

std::array<bool, 8> scm_active(int M, int L) {
  check_sizes(M, L);
  return {true, M >= 2, L >= 1, L >= 1, L >= 2, true, M >= 2, L >= 1};
}

std::array<double, 8> to_array(const ReducedScmState& s) {
  return {s.Q, s.C, s.D, s.E, s.F, s.R, s.S, s.U};
}

ReducedScmState scm_from_array(const std::array<double, 8>& a) {
  return {a[0], a[1], a[2], a[3], a[4], a[5], a[6], a[7]};
}

ReducedScmState scm_fixed_point() {
  ReducedScmState s;
  s.Q = 1.0;
  s.R = 1.0;
  return s;
}

MacroState embed_scm(const ReducedScmState& s, int M, int L) {
  check_sizes(M, L);
  const int K = M + L;
  MacroState m;
  m.R.resize(K, M);
  m.Q.resize(K, K);
  m.T = Eigen::MatrixXd::Identity(M, M);
  m.v = Eigen::VectorXd::Ones(K);
  m.v_star = Eigen::VectorXd::Ones(M);
  for (int i = 0; i < K; ++i) {
    for (int n = 0; n < M; ++n) m.R(i, n) = i >= M ? s.U : (i == n ? s.R : s.S);
    for (int j = 0; j < K; ++j) {
      const bool a = i < M;
      const bool b = j < M;
      if (a && b) {
        m.Q(i, j) = i == j ? s.Q : s.C;
      } else if (a != b) {
        m.Q(i, j) = s.D;
      } else {
        m.Q(i, j) = i == j ? s.E : s.F;
      }
    }
  }
  return m;
}

ReducedScmState project_scm(const Eigen::MatrixXd& R, const Eigen::MatrixXd& Q, int M, int L,
                            double tol) {
  check_sizes(M, L);
  const int K = M + L;
  if (R.rows() != K || R.cols() != M || Q.rows() != K || Q.cols() != K) {
    throw Error(ErrorCode::DimensionMismatch, "matrices do not have the (M + L, M) shape");
  }
  Block bq, bc, bd, be, bf, br, bs, bu;
  for (int i = 0; i < K; ++i) {
    for (int n = 0; n < M; ++n) (i >= M ? bu : (i == n ? br : bs)).add(R(i, n));
    for (int j = 0; j < K; ++j) {
      const bool a = i < M;
      const bool b = j < M;
      if (a && b) {
        (i == j ? bq : bc).add(Q(i, j));
      } else if (a != b) {
        bd.add(Q(i, j));
      } else {
        (i == j ? be : bf).add(Q(i, j));
      }
    }
  }
  check_blocks({{"Q", &bq}, {"C", &bc}, {"D", &bd}, {"E", &be}, {"F", &bf}, {"R", &br},
                {"S", &bs}, {"U", &bu}},
               std::max(max_abs(R), max_abs(Q)), tol);
  return {bq.mean(), bc.mean(), bd.mean(), be.mean(), bf.mean(), br.mean(), bs.mean(), bu.mean()};
}

ReducedScmState reduced_scm_rhs(const ReducedScmState& s, int M, int L, double eta, double sigma,
                                Activation act) {
  OdeConfig cfg;
  cfg.M = M;
  cfg.K = M + L;
  cfg.activation = act;
  cfg.eta_w = eta;
  cfg.sigma = sigma;
  cfg.mode = TrainMode::SCM;
  const MacroState d = full_rhs(embed_scm(s, M, L), validated(cfg));
  return project_scm(d.R, d.Q, M, L);
}

DenoisingState denoising_fixed_point(int Z, double v_star) {
  if (Z < 1) throw Error(ErrorCode::InvalidArgument, "need Z >= 1");
  return {1.0, 0.0, 1.0, 0.0, v_star / Z};
}

MacroState embed_denoising(const DenoisingState& s, int M, int Z, double v_star) {
  if (M < 1 || Z < 1) throw Error(ErrorCode::InvalidArgument, "need M >= 1 and Z >= 1");
  const int K = Z * M;
  MacroState m;
  m.R.resize(K, M);
  m.Q.resize(K, K);
  m.T = Eigen::MatrixXd::Identity(M, M);
  m.v = Eigen::VectorXd::Constant(K, s.v);
  m.v_star = Eigen::VectorXd::Constant(M, v_star);
  for (int i = 0; i < K; ++i) {
    for (int n = 0; n < M; ++n) m.R(i, n) = i % M == n % M ? s.R : s.S;
    for (int j = 0; j < K; ++j) m.Q(i, j) = i % M == j % M ? s.Q : s.C;
  }
  return m;
}

DenoisingState project_denoising(const Eigen::MatrixXd& R, const Eigen::MatrixXd& Q,
                                 const Eigen::VectorXd& v, int M, int Z, double tol) {
  if (M < 1 || Z < 1) throw Error(ErrorCode::InvalidArgument, "need M >= 1 and Z >= 1");
  const int K = Z * M;
  if (R.rows() != K || R.cols() != M || Q.rows() != K || Q.cols() != K || v.size() != K) {
    throw Error(ErrorCode::DimensionMismatch, "matrices do not have the (Z M, M) shape");
  }
  Block bq, bc, br, bs, bv;
  for (int i = 0; i < K; ++i) {
    for (int n = 0; n < M; ++n) (i % M == n % M ? br : bs).add(R(i, n));
    for (int j = 0; j < K; ++j) (i % M == j % M ? bq : bc).add(Q(i, j));
    bv.add(v(i));
  }
  const double scale = std::max({max_abs(R), max_abs(Q), max_abs(v)});
  check_blocks({{"Q", &bq}, {"C", &bc}, {"R", &br}, {"S", &bs}, {"v", &bv}}, scale, tol);
  return {bq.mean(), bc.mean(), br.mean(), bs.mean(), bv.mean()};
}

DenoisingState denoising_rhs(const DenoisingState& s, int M, int Z, double eta_w, double eta_v,
                             double sigma, double v_star, Activation act) {
  OdeConfig cfg;
  cfg.M = M;
  cfg.K = Z * M;
  cfg.activation = act;
  cfg.eta_w = eta_w;
  cfg.eta_v = eta_v;
  cfg.sigma = sigma;
  cfg.mode = TrainMode::BothLayers;
  const MacroState d = full_rhs(embed_denoising(s, M, Z, v_star), validated(cfg));
  return project_denoising(d.R, d.Q, d.v, M, Z);
}

}  // namespace cflow
