#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include <boost/random/uniform_real_distribution.hpp>

#include "cflow/error.hpp"
#include "cflow/gen_error.hpp"
#include "cflow/network.hpp"
#include "cflow/ode.hpp"
#include "cflow/reduced.hpp"
#include "cflow/sgd.hpp"
#include "helpers.hpp"

using namespace cflow;

namespace {

OdeConfig ode_config(int M, int K, Activation act, double eta, double sigma,
                     TrainMode mode = TrainMode::SCM) {
  OdeConfig cfg;
  cfg.M = M;
  cfg.K = K;
  cfg.activation = act;
  cfg.eta_w = eta;
  cfg.eta_v = mode == TrainMode::BothLayers ? eta : 0.0;
  cfg.sigma = sigma;
  cfg.mode = mode;
  return cfg;
}

// Generic macro state measured from random weights.
MacroState random_state(int K, int M, std::uint64_t seed) {
  const auto s = cflow::testing::random_net(K, 200, 1.0, seed);
  const auto t = cflow::testing::random_net(M, 200, 1.0, seed + 1000);
  return measure_macro(s, t);
}

double max_dyn(const MacroState& d) {
  return std::max({d.R.cwiseAbs().maxCoeff(), d.Q.cwiseAbs().maxCoeff(),
                   d.v.size() ? d.v.cwiseAbs().maxCoeff() : 0.0});
}

ReducedScmState random_scm_state(int M, int L, Rng& rng) {
  boost::random::uniform_real_distribution<double> u(-1.0, 1.0);
  for (;;) {
    ReducedScmState s;
    s.Q = 1.0 + 0.5 * u(rng);
    s.C = M >= 2 ? 0.2 * u(rng) : 0.0;
    s.D = L >= 1 ? 0.2 * u(rng) : 0.0;
    s.E = L >= 1 ? 0.6 + 0.4 * u(rng) : 0.0;
    s.F = L >= 2 ? 0.1 * u(rng) : 0.0;
    s.R = 0.7 * u(rng);
    s.S = M >= 2 ? 0.2 * u(rng) : 0.0;
    s.U = L >= 1 ? 0.2 * u(rng) : 0.0;
    const MacroState m = embed_scm(s, M, L);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m.field_covariance());
    if (es.eigenvalues().minCoeff() > 1e-3) return s;
  }
}

}  // namespace

TEST(FullRhs, PerfectStudentIsFixedPoint) {
  for (Activation act : {Activation::Erf, Activation::ReLU, Activation::Linear}) {
    for (int M : {1, 2, 4}) {
      MacroState m;
      m.R = m.Q = m.T = Eigen::MatrixXd::Identity(M, M);
      m.v = m.v_star = Eigen::VectorXd::Ones(M);
      const MacroState d = full_rhs(m, ode_config(M, M, act, 0.5, 0.0, TrainMode::BothLayers));
      EXPECT_LT(max_dyn(d), 1e-14) << to_string(act) << " M=" << M;
      EXPECT_EQ(d.T.norm(), 0.0);
    }
  }
}

TEST(FullRhs, ZeroRatesGiveZeroDerivative) {
  const MacroState m = random_state(3, 2, 1);
  const MacroState d = full_rhs(m, ode_config(2, 3, Activation::Erf, 0.0, 0.3, TrainMode::BothLayers));
  EXPECT_EQ(max_dyn(d), 0.0);
}

TEST(FullRhs, ScmKeepsSecondLayer) {
  const MacroState m = random_state(3, 2, 2);
  OdeConfig cfg = ode_config(2, 3, Activation::Erf, 0.3, 0.1);
  cfg.eta_v = 0.4;
  EXPECT_EQ(full_rhs(m, validated(cfg)).v.norm(), 0.0);
}

TEST(FullRhs, ShapeMismatch) {
  const MacroState m = random_state(3, 2, 3);
  EXPECT_THROW(full_rhs(m, ode_config(2, 2, Activation::Erf, 0.1, 0.0)), Error);
  OdeConfig bad = ode_config(2, 3, Activation::Erf, 0.1, 0.0);
  bad.d_alpha = 0.0;
  EXPECT_THROW(validated(bad), Error);
}

// The drift of the order parameters is the expected one-step SGD increment
// times N. Each weight pair is realised at N = 5000 and stepped once per
// fresh sample.
TEST(FullRhs, MatchesMonteCarloDrift) {
  const int K = 3, M = 2;
  const std::int64_t N = 5000;
  MacroState m = random_state(K, M, 4);
  m.v << 0.8, 1.3, -0.4;
  m.v_star << 1.0, 0.6;
  TrainConfig tc;
  tc.N = N;
  tc.K = K;
  tc.M = M;
  tc.activation = Activation::Erf;
  tc.eta_w = 0.5;
  tc.eta_v = 0.5;
  tc.sigma = 0.3;
  tc.mode = TrainMode::BothLayers;
  const OdeConfig oc = ode_config(M, K, Activation::Erf, 0.5, 0.3, TrainMode::BothLayers);
  const MacroState drift = full_rhs(m, oc);

  const NetworkPair pair = embed_macro_state(m, N, 99);
  const NetworkParams student(pair.student.first_layer(), m.v);
  const NetworkParams teacher(pair.teacher.first_layer(), m.v_star);
  const MacroState m0 = measure_macro(student, teacher);
  const Eigen::VectorXd y0 = pack_dynamic(m0);

  GaussianSampler normal(5);
  const int samples = 10000;
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(y0.size());
  Eigen::VectorXd sum2 = Eigen::VectorXd::Zero(y0.size());
  std::vector<Sample> batch(1);
  batch[0].x.resize(N);
  for (int s = 0; s < samples; ++s) {
    normal.fill({batch[0].x.data(), static_cast<std::size_t>(N)});
    batch[0].y = forward(teacher, batch[0].x, Activation::Erf) + tc.sigma * normal();
    const NetworkParams next = sgd_step(student, batch, tc);
    const Eigen::VectorXd inc = (pack_dynamic(measure_macro(next, teacher)) - y0) * double(N);
    sum += inc;
    sum2 += inc.cwiseProduct(inc);
  }
  const Eigen::VectorXd mean = sum / samples;
  const Eigen::VectorXd var = (sum2 / samples - mean.cwiseProduct(mean)) * samples / (samples - 1);
  const Eigen::VectorXd se = (var / samples).cwiseSqrt();
  const Eigen::VectorXd expected = pack_dynamic(drift);
  for (Eigen::Index i = 0; i < mean.size(); ++i) {
    EXPECT_LT(std::abs(mean(i) - expected(i)), 4.0 * se(i))
        << "component " << i << " mc " << mean(i) << " ode " << expected(i) << " se " << se(i);
  }
}

TEST(PackDynamic, RoundTrip) {
  const MacroState m = random_state(3, 2, 6);
  const MacroState back = unpack_dynamic(pack_dynamic(m), m);
  EXPECT_EQ(back.R, m.R);
  EXPECT_EQ(back.Q, m.Q);
  EXPECT_EQ(back.v, m.v);
  EXPECT_EQ(pack_dynamic(m).size(), 3 * 2 + 6 + 3);
}

TEST(Integrate, ZeroFieldIsConstant) {
  const Eigen::VectorXd y0 = Eigen::VectorXd::LinSpaced(4, 1, 4);
  const VectorField zero = [](const Eigen::VectorXd& y) { return Eigen::VectorXd::Zero(y.size()); };
  for (Integrator method : {Integrator::Euler, Integrator::RK4}) {
    const VectorTrajectory tr = integrate_vector(zero, y0, 0.1, 1.0, method);
    EXPECT_EQ(tr.points.size(), 11u);
    for (const auto& p : tr.points) EXPECT_EQ(p.state, y0);
  }
}

TEST(Integrate, ConvergenceOrders) {
  const MacroState m = random_state(3, 2, 7);
  const OdeConfig cfg = ode_config(2, 3, Activation::Erf, 0.5, 0.1);
  const VectorField f = [&](const Eigen::VectorXd& y) {
    return pack_dynamic(full_rhs(unpack_dynamic(y, m), cfg));
  };
  const Eigen::VectorXd y0 = pack_dynamic(m);
  auto endpoint = [&](double h, Integrator method) {
    return integrate_vector(f, y0, h, 2.0, method).points.back().state;
  };
  const double h = 0.1;
  const double euler = (endpoint(h, Integrator::Euler) - endpoint(h / 2, Integrator::Euler)).norm() /
                       (endpoint(h / 2, Integrator::Euler) - endpoint(h / 4, Integrator::Euler)).norm();
  const double rk4 = (endpoint(h, Integrator::RK4) - endpoint(h / 2, Integrator::RK4)).norm() /
                     (endpoint(h / 2, Integrator::RK4) - endpoint(h / 4, Integrator::RK4)).norm();
  EXPECT_NEAR(euler, 2.0, 0.2);
  EXPECT_NEAR(rk4, 16.0, 3.0);
}

TEST(Integrate, BlowUpAbortsWithPartialTrajectory) {
  const VectorField grow = [](const Eigen::VectorXd& y) { return Eigen::VectorXd(3.0 * y); };
  const VectorTrajectory tr =
      integrate_vector(grow, Eigen::VectorXd::Ones(2), 0.01, 100.0, Integrator::RK4, 10);
  EXPECT_TRUE(tr.aborted);
  EXPECT_FALSE(tr.diagnostic.empty());
  EXPECT_FALSE(tr.points.empty());
  EXPECT_LT(tr.points.back().alpha, 100.0);
}

TEST(Integrate, ErfScmSpecialisesAfterPlateau) {
  MacroState m;
  m.T = Eigen::MatrixXd::Identity(2, 2);
  m.R.resize(2, 2);
  m.R << 0.010, 0.003, -0.004, 0.008;
  m.Q.resize(2, 2);
  m.Q << 0.30, 0.01, 0.01, 0.25;
  m.v = m.v_star = Eigen::VectorXd::Ones(2);
  OdeConfig cfg = ode_config(2, 2, Activation::Erf, 0.1, 0.0);
  cfg.integrator = Integrator::RK4;
  cfg.d_alpha = 0.05;
  const Trajectory tr = integrate(m, cfg, 3000.0, 200);
  ASSERT_FALSE(tr.aborted) << tr.diagnostic;
  EXPECT_LT(tr.points.back().eg, 1e-6);
  EXPECT_LT(tr.points.back().eg, tr.points.front().eg);
  // A plateau: eg lingers near a constant well above zero for a while.
  int plateau = 0;
  for (std::size_t i = 1; i < tr.points.size(); ++i) {
    if (tr.points[i].eg > 1e-3 && std::abs(tr.points[i].eg - tr.points[i - 1].eg) < 1e-4) ++plateau;
  }
  EXPECT_GT(plateau, 3);
}

TEST(ReducedScm, EmbeddingPattern) {
  ReducedScmState s{1, 2, 3, 4, 5, 6, 7, 8};
  const MacroState m = embed_scm(s, 3, 2);
  Eigen::MatrixXd Q(5, 5), R(5, 3);
  Q << 1, 2, 2, 3, 3,
       2, 1, 2, 3, 3,
       2, 2, 1, 3, 3,
       3, 3, 3, 4, 5,
       3, 3, 3, 5, 4;
  R << 6, 7, 7,
       7, 6, 7,
       7, 7, 6,
       8, 8, 8,
       8, 8, 8;
  EXPECT_EQ(m.Q, Q);
  EXPECT_EQ(m.R, R);
  EXPECT_EQ(m.T, Eigen::MatrixXd::Identity(3, 3));
  EXPECT_EQ(m.v, Eigen::VectorXd::Ones(5));
  const MacroState f = embed_scm(scm_fixed_point(), 2, 2);
  Eigen::MatrixXd rf = Eigen::MatrixXd::Zero(4, 2);
  rf.topRows(2).setIdentity();
  EXPECT_EQ(f.R, rf);
  // E = 0 leaves the surplus units with zero norm.
  Eigen::MatrixXd qf = Eigen::MatrixXd::Zero(4, 4);
  qf.topLeftCorner(2, 2).setIdentity();
  EXPECT_EQ(f.Q, qf);
  EXPECT_EQ(embed_scm(scm_fixed_point(), 3, 0).Q, Eigen::MatrixXd::Identity(3, 3));
}

TEST(ReducedScm, FixedPointAndZeroRate) {
  for (int M : {1, 2, 3}) {
    for (int L : {0, 1, 3}) {
      const auto d = to_array(reduced_scm_rhs(scm_fixed_point(), M, L, 0.3, 0.0));
      for (double x : d) EXPECT_LT(std::abs(x), 1e-14);
      Rng rng(M * 10 + L);
      const auto z = to_array(reduced_scm_rhs(random_scm_state(M, L, rng), M, L, 0.0, 0.2));
      for (double x : z) EXPECT_EQ(x, 0.0);
    }
  }
}

TEST(ReducedScm, MatchesFullRhsBlocks) {
  Rng rng(3);
  const ReducedScmState s = random_scm_state(2, 1, rng);
  const ReducedScmState d = reduced_scm_rhs(s, 2, 1, 0.4, 0.2);
  const MacroState full = full_rhs(embed_scm(s, 2, 1), ode_config(2, 3, Activation::Erf, 0.4, 0.2));
  EXPECT_DOUBLE_EQ(d.Q, full.Q(1, 1));
  EXPECT_NEAR(d.C, full.Q(0, 1), 1e-15);
  EXPECT_NEAR(d.D, full.Q(2, 0), 1e-15);
  EXPECT_NEAR(d.E, full.Q(2, 2), 1e-15);
  EXPECT_NEAR(d.R, full.R(1, 1), 1e-15);
  EXPECT_NEAR(d.S, full.R(0, 1), 1e-15);
  EXPECT_NEAR(d.U, full.R(2, 0), 1e-15);
}

TEST(ReducedScm, ManifoldViolationDetected) {
  Eigen::MatrixXd R = embed_scm(scm_fixed_point(), 2, 1).R;
  Eigen::MatrixXd Q = embed_scm(scm_fixed_point(), 2, 1).Q;
  R(0, 0) += 1e-3;
  try {
    project_scm(R, Q, 2, 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ManifoldViolation);
  }
}

TEST(OdeProperty, ScmManifoldClosure) {
  Rng rng(2025);
  for (int trial = 0; trial < 100; ++trial) {
    const int M = 1 + trial % 4;
    const int L = (trial / 4) % 5;
    const ReducedScmState s = random_scm_state(M, L, rng);
    for (Activation act : {Activation::Erf, Activation::Linear}) {
      const MacroState d = full_rhs(embed_scm(s, M, L), ode_config(M, M + L, act, 0.3, 0.1));
      EXPECT_NO_THROW(project_scm(d.R, d.Q, M, L, 1e-10))
          << "M=" << M << " L=" << L << " " << to_string(act);
    }
  }
}

TEST(OdeProperty, DenoisingManifoldClosure) {
  Rng rng(2026);
  boost::random::uniform_real_distribution<double> u(-1.0, 1.0);
  int checked = 0;
  while (checked < 60) {
    const int M = 1 + checked % 3;
    const int Z = 1 + (checked / 3) % 3;
    DenoisingState s{1.0 + 0.3 * u(rng), M > 1 ? 0.2 * u(rng) : 0.0, 0.6 * u(rng),
                     M > 1 ? 0.2 * u(rng) : 0.0, 0.5 + 0.3 * u(rng)};
    // Units of one group are copies of each other, so positivity is
    // decided by the Z = 1 embedding.
    const MacroState m = embed_denoising(s, M, Z, 2.0);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(embed_denoising(s, M, 1, 2.0).field_covariance());
    if (es.eigenvalues().minCoeff() < 1e-3) continue;
    const MacroState d =
        full_rhs(m, ode_config(M, Z * M, Activation::Erf, 0.2, 0.1, TrainMode::BothLayers));
    EXPECT_NO_THROW(project_denoising(d.R, d.Q, d.v, M, Z, 1e-10)) << "M=" << M << " Z=" << Z;
    ++checked;
  }
}

TEST(Denoising, EmbeddingPatternAndFixedPoint) {
  const DenoisingState s{1, 2, 3, 4, 0.5};
  const MacroState m = embed_denoising(s, 2, 2, 1.0);
  Eigen::MatrixXd Q(4, 4), R(4, 2);
  Q << 1, 2, 1, 2,
       2, 1, 2, 1,
       1, 2, 1, 2,
       2, 1, 2, 1;
  R << 3, 4,
       4, 3,
       3, 4,
       4, 3;
  EXPECT_EQ(m.Q, Q);
  EXPECT_EQ(m.R, R);
  EXPECT_EQ(m.v, Eigen::VectorXd::Constant(4, 0.5));

  const DenoisingState d = denoising_rhs({1, 0, 1, 0, 1.0}, 1, 1, 0.3, 0.3, 0.0, 1.0);
  for (double x : {d.Q, d.C, d.R, d.S, d.v}) EXPECT_LT(std::abs(x), 1e-14);
  const auto fp = denoising_fixed_point(4, 2.0);
  EXPECT_EQ(fp.v, 0.5);
}

TEST(Denoising, MatchesFullRhsBlocks) {
  const DenoisingState s{1.1, 0.3, 0.5, 0.1, 0.7};
  const DenoisingState d = denoising_rhs(s, 2, 2, 0.2, 0.3, 0.1, 1.5);
  OdeConfig cfg = ode_config(2, 4, Activation::Erf, 0.2, 0.1, TrainMode::BothLayers);
  cfg.eta_v = 0.3;
  const MacroState full = full_rhs(embed_denoising(s, 2, 2, 1.5), cfg);
  EXPECT_NEAR(d.Q, full.Q(0, 2), 1e-15);
  EXPECT_NEAR(d.C, full.Q(1, 2), 1e-15);
  EXPECT_NEAR(d.R, full.R(3, 1), 1e-15);
  EXPECT_NEAR(d.S, full.R(3, 0), 1e-15);
  EXPECT_NEAR(d.v, full.v(2), 1e-15);
}

// Integrating the reduced system and the full system from the same
// on-manifold start gives the same trajectory.
TEST(OdeProperty, ReducedTrajectoryMatchesFull) {
  const int M = 2, L = 2;
  Rng rng(8);
  const ReducedScmState s0 = random_scm_state(M, L, rng);
  const double eta = 0.3, sigma = 0.1;
  const VectorField reduced = [&](const Eigen::VectorXd& y) {
    std::array<double, 8> a;
    for (int i = 0; i < 8; ++i) a[i] = y(i);
    const auto d = to_array(reduced_scm_rhs(scm_from_array(a), M, L, eta, sigma));
    return Eigen::VectorXd(Eigen::Map<const Eigen::VectorXd>(d.data(), 8));
  };
  const auto a0 = to_array(s0);
  const VectorTrajectory rt = integrate_vector(
      reduced, Eigen::Map<const Eigen::VectorXd>(a0.data(), 8), 0.01, 20.0, Integrator::RK4, 100);
  OdeConfig cfg = ode_config(M, M + L, Activation::Erf, eta, sigma);
  cfg.integrator = Integrator::RK4;
  cfg.d_alpha = 0.01;
  const Trajectory ft = integrate(embed_scm(s0, M, L), cfg, 20.0, 100);
  ASSERT_EQ(rt.points.size(), ft.points.size());
  for (std::size_t i = 0; i < ft.points.size(); ++i) {
    std::array<double, 8> a;
    for (int j = 0; j < 8; ++j) a[j] = rt.points[i].state(j);
    const MacroState e = embed_scm(scm_from_array(a), M, L);
    EXPECT_LT((e.R - ft.points[i].state.R).cwiseAbs().maxCoeff(), 1e-8);
    EXPECT_LT((e.Q - ft.points[i].state.Q).cwiseAbs().maxCoeff(), 1e-8);
  }
}
