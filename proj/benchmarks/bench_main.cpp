#include <benchmark/benchmark.h>

#include <vector>

#include "cflow/moments.hpp"
#include "cflow/network.hpp"
#include "cflow/ode.hpp"
#include "cflow/random.hpp"
#include "cflow/sgd.hpp"

using namespace cflow;

namespace {

TrainConfig bench_config(std::int64_t N, std::int64_t K, Activation act) {
  TrainConfig cfg;
  cfg.N = N;
  cfg.M = 2;
  cfg.K = K;
  cfg.activation = act;
  cfg.eta_w = 0.2;
  cfg.sigma = 0.01;
  cfg.steps = 1;
  return validated(cfg);
}

void BM_SgdStep(benchmark::State& state) {
  const TrainConfig cfg = bench_config(state.range(0), state.range(1), Activation::Erf);
  const NetworkParams teacher = make_teacher(cfg);
  NetworkParams student = make_student(cfg);
  GaussianSampler normal(3);
  Sample s{Eigen::VectorXd(cfg.N), 0.0};
  for (Eigen::Index j = 0; j < cfg.N; ++j) s.x(j) = normal();
  s.y = forward(teacher, s.x, cfg.activation);
  for (auto _ : state) {
    student = sgd_step(student, std::span<const Sample>(&s, 1), cfg);
    benchmark::DoNotOptimize(student.first_layer().data());
  }
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_SgdStep)->Args({784, 4})->Args({784, 16})->Args({4000, 4});

void BM_SimulateOneAlpha(benchmark::State& state) {
  TrainConfig cfg = bench_config(784, state.range(0), Activation::Erf);
  cfg.steps = cfg.N;
  const NetworkParams teacher = make_teacher(cfg);
  for (auto _ : state) {
    InputSource source = make_source(cfg, teacher);
    RunOptions ro;
    ro.record_stride = cfg.N;
    benchmark::DoNotOptimize(run(cfg, teacher, source, ro).records.size());
  }
}
BENCHMARK(BM_SimulateOneAlpha)->Arg(4)->Arg(8)->Unit(benchmark::kMillisecond);

void BM_FullRhs(benchmark::State& state) {
  const auto K = state.range(0);
  const auto act = static_cast<Activation>(state.range(1));
  const TrainConfig cfg = bench_config(500, K, act);
  const MacroState m = measure_macro(make_student(cfg), make_teacher(cfg));
  OdeConfig oc;
  oc.M = 2;
  oc.K = static_cast<int>(K);
  oc.activation = act;
  oc.eta_w = 0.2;
  oc.sigma = 0.01;
  for (auto _ : state) benchmark::DoNotOptimize(full_rhs(m, oc).R.data());
}
BENCHMARK(BM_FullRhs)
    ->Args({4, static_cast<int>(Activation::Erf)})
    ->Args({8, static_cast<int>(Activation::Erf)})
    ->Args({8, static_cast<int>(Activation::ReLU)})
    ->Unit(benchmark::kMicrosecond);

void BM_ClosedFormI4(benchmark::State& state) {
  const auto act = static_cast<Activation>(state.range(0));
  Eigen::Matrix4d c = Eigen::Matrix4d::Constant(0.3);
  c.diagonal().setConstant(1.0);
  for (auto _ : state) benchmark::DoNotOptimize(moment_kernels::i4(act, c));
}
BENCHMARK(BM_ClosedFormI4)->Arg(static_cast<int>(Activation::Erf))->Arg(static_cast<int>(Activation::ReLU));

void BM_MonteCarloI4(benchmark::State& state) {
  Eigen::MatrixXd c = Eigen::MatrixXd::Constant(4, 4, 0.3);
  c.diagonal().setConstant(1.0);
  const CovBlock cov(c);
  for (auto _ : state) benchmark::DoNotOptimize(mc_moment(MomentKind::I4, cov, Activation::Erf, 100000, 1));
}
BENCHMARK(BM_MonteCarloI4)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
