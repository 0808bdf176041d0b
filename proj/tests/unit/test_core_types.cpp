#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <numeric>
#include <vector>

#include <boost/random/uniform_int_distribution.hpp>
#include <boost/random/uniform_real_distribution.hpp>

#include "cflow/activation.hpp"
#include "cflow/error.hpp"
#include "cflow/gen_error.hpp"
#include "cflow/network.hpp"
#include "helpers.hpp"

using namespace cflow;
using cflow::testing::random_net;

namespace {

constexpr Activation kAll[] = {Activation::Erf, Activation::ReLU, Activation::Linear};

MacroState scalar_state(double Q, double R, double T, double v, double vs) {
  MacroState m;
  m.Q = Eigen::MatrixXd::Constant(1, 1, Q);
  m.R = Eigen::MatrixXd::Constant(1, 1, R);
  m.T = Eigen::MatrixXd::Constant(1, 1, T);
  m.v = Eigen::VectorXd::Constant(1, v);
  m.v_star = Eigen::VectorXd::Constant(1, vs);
  return m;
}

ErrorCode code_of(const auto& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no cflow::Error raised";
  return ErrorCode::Io;
}

}  // namespace

TEST(Activation, DerivativeMatchesFiniteDifference) {
  Rng rng(11);
  boost::random::uniform_real_distribution<double> u(-4.0, 4.0);
  const double h = 1e-5;
  for (Activation act : kAll) {
    for (int i = 0; i < 100; ++i) {
      double x = u(rng);
      if (act == Activation::ReLU && std::abs(x) < 1e-3) x += 0.01;
      const double fd = (activate(act, x + h) - activate(act, x - h)) / (2 * h);
      EXPECT_NEAR(fd, activate_prime(act, x), 1e-6) << to_string(act) << " x=" << x;
    }
  }
}

TEST(Activation, ReluDerivativeAtZeroIsZero) {
  EXPECT_EQ(activate_prime(Activation::ReLU, 0.0), 0.0);
}

TEST(Activation, ParseRoundTrip) {
  for (Activation act : kAll) EXPECT_EQ(parse_activation(to_string(act)), act);
  EXPECT_EQ(parse_activation("ERF"), Activation::Erf);
  EXPECT_THROW(parse_activation("tanh"), Error);
}

TEST(NetworkParams, RejectsBadShapesAndValues) {
  EXPECT_EQ(code_of([] { NetworkParams(RowMatrix::Zero(2, 3), Eigen::VectorXd::Zero(3)); }),
            ErrorCode::DimensionMismatch);
  EXPECT_EQ(code_of([] { NetworkParams(RowMatrix::Zero(0, 3), Eigen::VectorXd::Zero(0)); }),
            ErrorCode::DimensionMismatch);
  RowMatrix w = RowMatrix::Zero(1, 2);
  w(0, 1) = std::nan("");
  EXPECT_EQ(code_of([&] { NetworkParams(w, Eigen::VectorXd::Ones(1)); }), ErrorCode::NonFinite);
}

TEST(Forward, ZeroWeightsGiveZero) {
  NetworkParams net(RowMatrix::Zero(1, 5), Eigen::VectorXd::Ones(1));
  const Eigen::VectorXd x = Eigen::VectorXd::LinSpaced(5, -1.0, 3.0);
  for (Activation act : kAll) EXPECT_EQ(forward(net, x, act), 0.0);
}

TEST(Forward, HandEvaluations) {
  NetworkParams lin(RowMatrix::Constant(1, 1, 1.0), Eigen::VectorXd::Constant(1, 2.0));
  EXPECT_DOUBLE_EQ(forward(lin, Eigen::VectorXd::Ones(1), Activation::Linear), 2.0);

  NetworkParams erf(RowMatrix::Ones(1, 4), Eigen::VectorXd::Ones(1));
  EXPECT_NEAR(forward(erf, Eigen::VectorXd::Ones(4), Activation::Erf), std::erf(std::sqrt(2.0)),
              1e-15);
  EXPECT_NEAR(std::erf(std::sqrt(2.0)), 0.95450, 1e-5);
}

TEST(Forward, DimensionMismatch) {
  NetworkParams net(RowMatrix::Ones(1, 4), Eigen::VectorXd::Ones(1));
  EXPECT_EQ(code_of([&] { forward(net, Eigen::VectorXd::Ones(3), Activation::Erf); }),
            ErrorCode::DimensionMismatch);
}

TEST(MeasureMacro, StudentEqualsTeacher) {
  const auto t = random_net(3, 50, 1.0, 3);
  const MacroState m = measure_macro(t, t);
  EXPECT_LT((m.R - m.T).norm(), 1e-12);
  EXPECT_LT((m.Q - m.T).norm(), 1e-12);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m.field_covariance());
  const int rank = static_cast<int>((es.eigenvalues().array() > 1e-9).count());
  EXPECT_LE(rank, 3);
}

TEST(MeasureMacro, OrthogonalRows) {
  NetworkParams s(RowMatrix::Ones(1, 4), Eigen::VectorXd::Ones(1));
  RowMatrix wt(1, 4);
  wt << 1, -1, 1, -1;
  NetworkParams t(wt, Eigen::VectorXd::Ones(1));
  const MacroState m = measure_macro(s, t);
  EXPECT_DOUBLE_EQ(m.R(0, 0), 0.0);
  EXPECT_DOUBLE_EQ(m.Q(0, 0), 1.0);
  EXPECT_DOUBLE_EQ(m.T(0, 0), 1.0);
}

TEST(MeasureMacro, DuplicatedRowGivesRankOneQ) {
  RowMatrix w(2, 6);
  w.row(0) << 1, 2, 0, -1, 0.5, 3;
  w.row(1) = w.row(0);
  NetworkParams s(w, Eigen::VectorXd::Ones(2));
  const MacroState m = measure_macro(s, random_net(1, 6, 1.0, 1));
  EXPECT_DOUBLE_EQ(m.Q(0, 0), m.Q(0, 1));
  EXPECT_DOUBLE_EQ(m.Q(1, 1), m.Q(0, 1));
}

TEST(MeasureMacro, DimensionMismatch) {
  EXPECT_EQ(code_of([] { measure_macro(random_net(2, 5, 1, 1), random_net(2, 6, 1, 2)); }),
            ErrorCode::DimensionMismatch);
}

TEST(CheckMacroState, RejectsAsymmetricAndNonPsd) {
  MacroState m = scalar_state(1.0, 2.0, 1.0, 1.0, 1.0);  // R^2 > Q T
  EXPECT_EQ(code_of([&] { check_macro_state(m); }), ErrorCode::NotPositiveSemidefinite);
  EXPECT_EQ(code_of([&] { gen_error_analytic(m, Activation::Erf); }),
            ErrorCode::NotPositiveSemidefinite);

  MacroState a;
  a.Q = Eigen::MatrixXd::Identity(2, 2);
  a.Q(0, 1) = 0.1;
  a.R = Eigen::MatrixXd::Zero(2, 1);
  a.T = Eigen::MatrixXd::Identity(1, 1);
  a.v = Eigen::VectorXd::Ones(2);
  a.v_star = Eigen::VectorXd::Ones(1);
  EXPECT_THROW(check_macro_state(a), Error);

  MacroState b = scalar_state(1.0, 0.0, 1.0, 1.0, 1.0);
  b.v = Eigen::VectorXd::Ones(2);
  EXPECT_EQ(code_of([&] { check_macro_state(b); }), ErrorCode::DimensionMismatch);
}

TEST(GenErrorAnalytic, ZeroWhenStudentIsTeacher) {
  const auto t = random_net(3, 40, 1.0, 5);
  const MacroState m = measure_macro(t, t);
  for (Activation act : kAll) EXPECT_NEAR(gen_error_analytic(m, act), 0.0, 1e-12);
}

TEST(GenErrorAnalytic, HandValues) {
  const MacroState m = scalar_state(1.0, 0.0, 1.0, 1.0, 1.0);
  EXPECT_NEAR(gen_error_analytic(m, Activation::Erf), 1.0 / 3.0, 1e-14);
  EXPECT_NEAR(gen_error_analytic(m, Activation::Linear), 1.0, 1e-14);
  // ReLU: <relu(x)^2> = Q/2 each, cross term zero-correlation value 1/(2 pi).
  EXPECT_NEAR(gen_error_analytic(m, Activation::ReLU), 0.5 * (1.0 - 1.0 / std::numbers::pi),
              1e-12);
}

TEST(GenErrorMc, ExactZeroForIdenticalNetworks) {
  const auto t = random_net(2, 30, 1.0, 9);
  for (Activation act : kAll) {
    const McEstimate e = gen_error_mc(t, t, act, 1000, 1);
    EXPECT_EQ(e.estimate, 0.0);
    EXPECT_EQ(e.std_error, 0.0);
  }
}

TEST(GenErrorMc, HandExamplesWithinFourStdErr) {
  // Q = T = 1, R = 0 realised with orthogonal rows of squared norm N.
  RowMatrix ws(1, 4), wt(1, 4);
  ws << 1, 1, 1, 1;
  wt << 1, -1, 1, -1;
  NetworkParams s(ws, Eigen::VectorXd::Ones(1)), t(wt, Eigen::VectorXd::Ones(1));
  for (auto [act, expected] :
       {std::pair{Activation::Erf, 1.0 / 3.0}, std::pair{Activation::Linear, 1.0}}) {
    for (McInput input : {McInput::Projected, McInput::Full}) {
      const McEstimate e = gen_error_mc(s, t, act, 1000000, 42, input);
      EXPECT_LT(std::abs(e.estimate - expected), 4.0 * e.std_error) << to_string(act);
    }
  }
}

TEST(GenErrorMc, DeterministicPerSeed) {
  const auto s = random_net(2, 20, 1.0, 1), t = random_net(2, 20, 1.0, 2);
  const auto a = gen_error_mc(s, t, Activation::Erf, 5000, 7);
  const auto b = gen_error_mc(s, t, Activation::Erf, 5000, 7);
  const auto c = gen_error_mc(s, t, Activation::Erf, 5000, 8);
  EXPECT_EQ(a.estimate, b.estimate);
  EXPECT_NE(a.estimate, c.estimate);
  EXPECT_THROW(gen_error_mc(s, t, Activation::Erf, 0, 1), Error);
  EXPECT_THROW(gen_error_mc(s, random_net(2, 21, 1, 3), Activation::Erf, 10, 1), Error);
}

// 50 random pairs per activation, K, M <= 5, N = 500, 1e6 samples each.
TEST(GenErrorProperty, AnalyticMatchesMonteCarlo) {
  Rng rng(2024);
  boost::random::uniform_int_distribution<int> size(1, 5);
  for (Activation act : kAll) {
    const double var = act == Activation::Erf ? 1.0 : 1.0 / std::sqrt(500.0);
    int failures = 0;
    for (int trial = 0; trial < 50; ++trial) {
      const int K = size(rng), M = size(rng);
      const auto s = random_net(K, 500, var, rng());
      const auto t = random_net(M, 500, var, rng());
      const double exact = gen_error_analytic(measure_macro(s, t), act);
      const McEstimate mc = gen_error_mc(s, t, act, 1000000, rng());
      const double z = std::abs(mc.estimate - exact) / mc.std_error;
      if (z > 4.0) {
        ++failures;
        ADD_FAILURE() << to_string(act) << " K=" << K << " M=" << M << " exact=" << exact
                      << " mc=" << mc.estimate << " z=" << z;
      }
    }
    EXPECT_EQ(failures, 0);
  }
}

TEST(GenErrorProperty, PermutationEquivariance) {
  const auto s = random_net(4, 60, 1.0, 21);
  const auto t = random_net(3, 60, 1.0, 22);
  const std::vector<int> perm{2, 0, 3, 1};
  RowMatrix w(4, 60);
  Eigen::VectorXd v(4);
  for (int i = 0; i < 4; ++i) {
    w.row(i) = s.first_layer().row(perm[i]);
    v(i) = s.second_layer()(perm[i]);
  }
  const NetworkParams sp(w, v);
  const MacroState a = measure_macro(s, t), b = measure_macro(sp, t);
  for (int i = 0; i < 4; ++i) {
    EXPECT_LT((b.R.row(i) - a.R.row(perm[i])).norm(), 1e-14);
    for (int j = 0; j < 4; ++j) EXPECT_NEAR(b.Q(i, j), a.Q(perm[i], perm[j]), 1e-14);
  }
  for (Activation act : kAll) {
    EXPECT_NEAR(gen_error_analytic(a, act), gen_error_analytic(b, act), 1e-12);
  }
}

TEST(GenErrorProperty, RotationInvariance) {
  const Eigen::Index n = 30;
  const auto s = random_net(3, n, 1.0, 31);
  const auto t = random_net(2, n, 1.0, 32);
  GaussianSampler normal(33);
  Eigen::MatrixXd g(n, n);
  for (Eigen::Index i = 0; i < g.size(); ++i) g.data()[i] = normal();
  const Eigen::MatrixXd rot = Eigen::HouseholderQR<Eigen::MatrixXd>(g).householderQ();
  const NetworkParams sr(s.first_layer() * rot, s.second_layer());
  const NetworkParams tr(t.first_layer() * rot, t.second_layer());
  const MacroState a = measure_macro(s, t), b = measure_macro(sr, tr);
  EXPECT_LT((a.R - b.R).norm(), 1e-12);
  EXPECT_LT((a.Q - b.Q).norm(), 1e-12);
  EXPECT_LT((a.T - b.T).norm(), 1e-12);
  for (Activation act : kAll) {
    EXPECT_NEAR(gen_error_analytic(a, act), gen_error_analytic(b, act), 1e-12);
  }
}

TEST(EmbedMacroState, ReproducesTarget) {
  const auto s = random_net(3, 80, 1.0, 41);
  const auto t = random_net(2, 80, 1.0, 42);
  MacroState target = measure_macro(s, t);
  const NetworkPair pair = embed_macro_state(target, 500, 7);
  const MacroState got = measure_macro(pair.student, pair.teacher);
  EXPECT_LT((got.R - target.R).norm(), 1e-12);
  EXPECT_LT((got.Q - target.Q).norm(), 1e-12);
  EXPECT_LT((got.T - target.T).norm(), 1e-12);
  EXPECT_EQ(got.v, target.v);
}

TEST(OrthonormalTeacher, IdentityOverlap) {
  const auto t = orthonormal_teacher(4, 100, 1.0, 3);
  const MacroState m = measure_macro(t, t);
  EXPECT_LT((m.T - Eigen::MatrixXd::Identity(4, 4)).norm(), 1e-12);
  EXPECT_THROW(orthonormal_teacher(5, 4, 1.0, 1), Error);
}
