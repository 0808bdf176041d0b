#include "cflow_lab/experiments.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <exception>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <optional>
#include <ostream>
#include <sstream>
#include <thread>

#include <boost/random/uniform_real_distribution.hpp>

#include "json.hpp"

#include "cflow/asymptotics.hpp"
#include "cflow/gen_error.hpp"
#include "cflow/moments.hpp"
#include "cflow/ode.hpp"
#include "cflow/perturbative.hpp"
#include "cflow/random.hpp"
#include "cflow/stats.hpp"
#include "cflow/theorem1.hpp"

namespace cflow::lab {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

unsigned worker_count() {
  unsigned hw = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("COMMITTEE_FLOW_THREADS")) {
    char* end = nullptr;
    const long cap = std::strtol(env, &end, 10);
    if (end != env && cap >= 1) hw = std::min<unsigned>(hw, static_cast<unsigned>(cap));
  }
  return hw;
}

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& job) {
  const std::size_t workers = std::min<std::size_t>(worker_count(), n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) job(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < workers; ++t) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) job(i);
    });
  }
  for (auto& th : pool) th.join();
}

TrainConfig grid_config(const ExperimentSpec& spec, std::int64_t K, double eta, double sigma,
                        std::uint64_t seed) {
  TrainConfig cfg = spec.train;
  cfg.K = K;
  cfg.eta_w = eta;
  if (cfg.mode == TrainMode::BothLayers) cfg.eta_v = eta;
  // An explicit eta_v in the config (different from eta_w) survives a
  // single-valued eta axis.
  if (spec.sweep.eta.size() == 1 && spec.train.eta_v != spec.train.eta_w &&
      cfg.mode == TrainMode::BothLayers) {
    cfg.eta_v = spec.train.eta_v;
  }
  cfg.sigma = sigma;
  cfg.seed = seed;
  return validated(cfg);
}

NetworkParams initial_student(const ExperimentSpec& spec, const TrainConfig& cfg,
                              const NetworkParams& teacher) {
  if (spec.student_init == StudentInit::Specialised) {
    return make_specialised_student(cfg, teacher, spec.surplus_std);
  }
  if (spec.student_init == StudentInit::Denoising) return make_denoising_student(cfg, teacher);
  return make_student(cfg);
}

namespace {

std::string fmt(double x) {
  if (!std::isfinite(x)) return std::isnan(x) ? "nan" : (x > 0 ? "inf" : "-inf");
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", x);
  return buf;
}

std::string fmt(const std::optional<double>& x) { return x ? fmt(*x) : std::string(); }

std::string mode_name(TrainMode m) { return m == TrainMode::SCM ? "scm" : "both"; }

struct GridPoint {
  std::int64_t K;
  double eta;
  double sigma;
  std::uint64_t seed;
};

std::vector<GridPoint> grid(const SweepAxes& axes) {
  std::vector<GridPoint> out;
  for (auto K : axes.K) {
    for (double eta : axes.eta) {
      for (double sigma : axes.sigma) {
        for (auto seed : axes.seed) out.push_back({K, eta, sigma, seed});
      }
    }
  }
  return out;
}

std::string label(const GridPoint& p) {
  std::ostringstream s;
  s << "K=" << p.K << " eta=" << fmt(p.eta) << " sigma=" << fmt(p.sigma) << " seed=" << p.seed;
  return s.str();
}

// Runs every grid point, collecting per-point CSV rows (in grid order).
template <typename Job>
std::vector<std::string> run_grid(const std::vector<GridPoint>& pts, ExperimentReport& report,
                                  std::ostream& log, Job job) {
  std::vector<std::string> rows(pts.size());
  report.points.resize(pts.size());
  std::mutex log_mutex;
  parallel_for(pts.size(), [&](std::size_t i) {
    PointStatus& st = report.points[i];
    st.index = i;
    st.label = label(pts[i]);
    const auto t0 = std::chrono::steady_clock::now();
    try {
      rows[i] = job(pts[i]);
    } catch (const std::exception& e) {
      st.ok = false;
      st.error = e.what();
    }
    const double dt = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::lock_guard<std::mutex> lock(log_mutex);
    log << "[" << (i + 1) << "/" << pts.size() << "] " << st.label << (st.ok ? " ok" : " FAILED: " + st.error)
        << " (" << fmt(dt) << " s)\n";
  });
  for (const auto& st : report.points) report.ok = report.ok && st.ok;
  return rows;
}

std::int64_t stride_for(const ExperimentSpec& spec, std::int64_t N) {
  return std::max<std::int64_t>(1, std::llround(spec.record_alpha * static_cast<double>(N)));
}

// ODE eg sampled on the SGD record grid (multiples of stride / N).
std::vector<double> ode_on_grid(const ExperimentSpec& spec, const TrainConfig& cfg,
                                const MacroState& initial, std::int64_t stride, double alpha_end) {
  OdeConfig oc;
  oc.M = static_cast<int>(cfg.M);
  oc.K = static_cast<int>(cfg.K);
  oc.activation = cfg.activation;
  oc.eta_w = cfg.eta_w;
  oc.eta_v = cfg.eta_v;
  oc.sigma = cfg.sigma;
  oc.mode = cfg.mode;
  oc.integrator = spec.integrator;
  const double grid = static_cast<double>(stride * cfg.batch) / static_cast<double>(cfg.N);
  const auto sub = static_cast<std::int64_t>(std::ceil(grid / spec.d_alpha - 1e-9));
  oc.d_alpha = grid / static_cast<double>(sub);
  const Trajectory tr = integrate(initial, oc, alpha_end, sub);
  if (tr.aborted) throw Error(ErrorCode::Divergence, "ODE integration aborted: " + tr.diagnostic);
  std::vector<double> eg;
  for (const OdePoint& p : tr.points) eg.push_back(p.eg);
  return eg;
}

const char* kSimulateHeader =
    "figure,activation,mode,N,M,K,eta,sigma,seed,step,alpha,eg_sim,eg_ode,train_loss,eg_min";
const char* kOdeHeader = "figure,activation,mode,M,K,eta,sigma,seed,alpha,eg";
const char* kSweepHeader =
    "figure,activation,mode,N,M,K,eta,sigma,seed,alpha_final,eg_final,eg_early_stop";
const char* kTheoremHeader = "figure,N,mean_deviation,std_error,seeds";
const char* kMomentsHeader = "kind,activation,index,covariance,closed_form,mc_estimate,mc_std_error,z,pass";
const char* kAsymptoticsHeader = "quantity,M,L,K,T,eta,sigma,v_star,value,status";

std::string prefix(const ExperimentSpec& spec, const TrainConfig& cfg) {
  std::ostringstream s;
  s << spec.figure << ',' << to_string(cfg.activation) << ',' << mode_name(cfg.mode) << ',' << cfg.N
    << ',' << cfg.M << ',' << cfg.K << ',' << fmt(cfg.eta_w) << ',' << fmt(cfg.sigma) << ','
    << cfg.seed;
  return s.str();
}

std::string simulate_point(const ExperimentSpec& spec, const GridPoint& p) {
  const TrainConfig cfg = grid_config(spec, p.K, p.eta, p.sigma, p.seed);
  const NetworkParams teacher = make_teacher(cfg);
  InputSource source = make_source(cfg, teacher);
  RunOptions ro;
  ro.record_stride = stride_for(spec, cfg.N);
  ro.initial_student = initial_student(spec, cfg, teacher);
  const SimRun sim = run(cfg, teacher, source, ro);

  std::vector<double> ode;
  if (spec.ode_overlay) {
    const MacroState m0 = measure_macro(*ro.initial_student, teacher);
    ode = ode_on_grid(spec, cfg, m0, ro.record_stride, sim.records.back().alpha);
  }
  std::ostringstream out;
  const std::string pre = prefix(spec, cfg);
  for (const SimRecord& r : sim.records) {
    std::optional<double> eg_ode;
    if (!ode.empty() && r.step % ro.record_stride == 0) {
      const auto k = static_cast<std::size_t>(r.step / ro.record_stride);
      if (k < ode.size()) eg_ode = ode[k];
    }
    out << pre << ',' << r.step << ',' << fmt(r.alpha) << ',' << fmt(r.eg) << ',' << fmt(eg_ode) << ','
        << fmt(r.train_loss) << ',' << fmt(r.eg_min) << '\n';
  }
  if (sim.aborted) throw Error(ErrorCode::NonFinite, sim.diagnostic);
  return out.str();
}

std::string ode_point(const ExperimentSpec& spec, const GridPoint& p) {
  const TrainConfig cfg = grid_config(spec, p.K, p.eta, p.sigma, p.seed);
  const NetworkParams teacher = make_teacher(cfg);
  const MacroState m0 = measure_macro(initial_student(spec, cfg, teacher), teacher);
  OdeConfig oc;
  oc.M = static_cast<int>(cfg.M);
  oc.K = static_cast<int>(cfg.K);
  oc.activation = cfg.activation;
  oc.eta_w = cfg.eta_w;
  oc.eta_v = cfg.eta_v;
  oc.sigma = cfg.sigma;
  oc.mode = cfg.mode;
  oc.integrator = spec.integrator;
  oc.d_alpha = spec.d_alpha;
  const auto every = std::max<std::int64_t>(1, std::llround(spec.record_alpha / spec.d_alpha));
  const Trajectory tr = integrate(m0, oc, spec.alpha_max, every);
  std::ostringstream out;
  for (const OdePoint& pt : tr.points) {
    out << spec.figure << ',' << to_string(cfg.activation) << ',' << mode_name(cfg.mode) << ','
        << cfg.M << ',' << cfg.K << ',' << fmt(cfg.eta_w) << ',' << fmt(cfg.sigma) << ',' << cfg.seed
        << ',' << fmt(pt.alpha) << ',' << fmt(pt.eg) << '\n';
  }
  if (tr.aborted) throw Error(ErrorCode::Divergence, tr.diagnostic);
  return out.str();
}

std::string sweep_point(const ExperimentSpec& spec, const GridPoint& p) {
  const TrainConfig cfg = grid_config(spec, p.K, p.eta, p.sigma, p.seed);
  const NetworkParams teacher = make_teacher(cfg);
  InputSource source = make_source(cfg, teacher);
  RunOptions ro;
  ro.record_stride = stride_for(spec, cfg.N);
  ro.initial_student = initial_student(spec, cfg, teacher);
  const SimRun sim = run(cfg, teacher, source, ro);
  if (sim.aborted) throw Error(ErrorCode::NonFinite, sim.diagnostic);
  const SimRecord& last = sim.records.back();
  std::ostringstream out;
  out << prefix(spec, cfg) << ',' << fmt(last.alpha) << ','
      << fmt(late_time_average(sim.records, spec.late_fraction)) << ',' << fmt(last.eg_min) << '\n';
  return out.str();
}

void write_file(const fs::path& path, const std::string& header, const std::vector<std::string>& rows) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorCode::Io, "cannot write " + path.string());
  f << header << '\n';
  for (const auto& r : rows) f << r;
  if (!f) throw Error(ErrorCode::Io, "write failed for " + path.string());
}

std::string timestamp() {
  const std::time_t now = std::time(nullptr);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
  return buf;
}

// Random covariance with diagonal in [0.1, 3] and a random correlation
// structure (normalised Wishart draw).
Eigen::MatrixXd random_covariance(int dim, std::uint64_t seed) {
  GaussianSampler g(seed);
  Eigen::MatrixXd a(dim, dim + 2);
  for (int i = 0; i < a.rows(); ++i) {
    for (int j = 0; j < a.cols(); ++j) a(i, j) = g();
  }
  Eigen::MatrixXd c = a * a.transpose();
  const Eigen::VectorXd d = c.diagonal().cwiseSqrt().cwiseInverse();
  c = d.asDiagonal() * c * d.asDiagonal();
  boost::random::uniform_real_distribution<double> u(0.1, 3.0);
  Eigen::VectorXd s(dim);
  for (int i = 0; i < dim; ++i) s(i) = std::sqrt(u(g.engine()));
  return s.asDiagonal() * c * s.asDiagonal();
}

double closed_moment(MomentKind kind, const CovBlock& cov, Activation act) {
  switch (kind) {
    case MomentKind::I2: return i2(cov, act);
    case MomentKind::J2: return j2(cov, act);
    case MomentKind::I3: return i3(cov, act);
    case MomentKind::I4: return i4(cov, act);
  }
  return 0.0;
}

const char* kind_name(MomentKind k) {
  switch (k) {
    case MomentKind::I2: return "I2";
    case MomentKind::J2: return "J2";
    case MomentKind::I3: return "I3";
    case MomentKind::I4: return "I4";
  }
  return "?";
}

}  // namespace

ExperimentReport run_experiment(const ExperimentSpec& spec, std::ostream& log) {
  ExperimentReport report;
  fs::create_directories(spec.output_dir);
  const fs::path csv = fs::path(spec.output_dir) / (spec.figure + ".csv");
  const fs::path manifest_path = fs::path(spec.output_dir) / (spec.figure + ".manifest.json");
  json summary = json::object();
  const auto started = std::chrono::steady_clock::now();

  switch (spec.command) {
    case Command::Simulate:
    case Command::Ode:
    case Command::Sweep: {
      const auto pts = grid(spec.sweep);
      if (pts.empty()) throw Error(ErrorCode::Config, "empty sweep grid");
      std::vector<std::string> rows;
      const char* header = kSweepHeader;
      if (spec.command == Command::Simulate) {
        header = kSimulateHeader;
        rows = run_grid(pts, report, log, [&](const GridPoint& p) { return simulate_point(spec, p); });
      } else if (spec.command == Command::Ode) {
        header = kOdeHeader;
        rows = run_grid(pts, report, log, [&](const GridPoint& p) { return ode_point(spec, p); });
      } else {
        rows = run_grid(pts, report, log, [&](const GridPoint& p) { return sweep_point(spec, p); });
      }
      write_file(csv, header, rows);
      report.csv_files.push_back(csv.string());
      break;
    }
    case Command::VerifyTheorem1: {
      const auto& t1 = spec.theorem1;
      Theorem1Options opt;
      opt.record_alpha = t1.record_alpha;
      const auto points = theorem1_deviation(spec.train, t1.N_list, t1.horizon, t1.seeds, opt);
      std::vector<std::string> rows;
      std::vector<double> xs;
      std::vector<std::vector<double>> reps;
      for (const auto& p : points) {
        std::ostringstream r;
        r << spec.figure << ',' << p.N << ',' << fmt(p.mean_deviation) << ',' << fmt(p.std_error) << ','
          << p.per_seed.size() << '\n';
        rows.push_back(r.str());
        xs.push_back(static_cast<double>(p.N));
        reps.push_back(p.per_seed);
        report.points.push_back({report.points.size(), "N=" + std::to_string(p.N), true, {}});
      }
      write_file(csv, kTheoremHeader, rows);
      report.csv_files.push_back(csv.string());
      const LineFit fit = loglog_fit_bootstrap(xs, reps, t1.bootstrap, derive_seed(spec.train.seed, 99));
      const bool wide = t1.seeds < 2;
      const fs::path fit_path = fs::path(spec.output_dir) / (spec.figure + "_fit.csv");
      write_file(fit_path, "figure,slope,slope_error,degenerate,wide_error_bars",
                 {spec.figure + ',' + fmt(fit.slope) + ',' + fmt(fit.slope_error) + ',' +
                  (fit.degenerate ? "true" : "false") + ',' + (wide ? "true" : "false") + '\n'});
      report.csv_files.push_back(fit_path.string());
      summary["slope"] = fit.degenerate ? json(nullptr) : json(fit.slope);
      summary["slope_error"] = fit.slope_error;
      summary["degenerate"] = fit.degenerate;
      summary["wide_error_bars"] = wide;
      std::ostringstream note;
      if (fit.degenerate) {
        note << "fit degenerate (deviations not all positive)";
      } else {
        note << "log-log slope " << fmt(fit.slope) << " +/- " << fmt(fit.slope_error);
      }
      if (wide) note << " [single seed: error bars not meaningful]";
      report.notes.push_back(note.str());
      break;
    }
    case Command::MomentsCheck: {
      const auto& mp = spec.moments;
      struct Task {
        MomentKind kind;
        Activation act;
        int index;
      };
      std::vector<Task> tasks;
      for (Activation act : mp.activations) {
        for (MomentKind kind : {MomentKind::I2, MomentKind::J2, MomentKind::I3, MomentKind::I4}) {
          for (int i = 0; i < mp.covariances; ++i) tasks.push_back({kind, act, i});
        }
      }
      std::vector<std::string> rows(tasks.size());
      std::vector<char> pass(tasks.size(), 1);
      report.points.resize(tasks.size());
      parallel_for(tasks.size(), [&](std::size_t t) {
        const Task& task = tasks[t];
        PointStatus& st = report.points[t];
        st.index = t;
        st.label = std::string(kind_name(task.kind)) + " " + std::string(to_string(task.act)) + " #" +
                   std::to_string(task.index);
        try {
          const int dim = moment_dim(task.kind);
          const std::uint64_t seed =
              derive_seed(spec.train.seed, 1000003ull * static_cast<std::uint64_t>(task.kind) +
                                               static_cast<std::uint64_t>(task.index));
          const CovBlock cov(random_covariance(dim, seed));
          const double closed = closed_moment(task.kind, cov, task.act);
          const McEstimate mc = mc_moment(task.kind, cov, task.act, mp.samples, derive_seed(seed, 1));
          const double diff = closed - mc.estimate;
          const double z = mc.std_error > 0.0 ? diff / mc.std_error : (std::abs(diff) <= 1e-12 ? 0.0 : HUGE_VAL);
          pass[t] = std::abs(z) <= 4.0;
          std::ostringstream c;
          for (int i = 0; i < dim; ++i) {
            for (int j = i; j < dim; ++j) c << (i + j ? ";" : "") << fmt(cov.matrix()(i, j));
          }
          std::ostringstream r;
          r << kind_name(task.kind) << ',' << to_string(task.act) << ',' << task.index << ',' << c.str()
            << ',' << fmt(closed) << ',' << fmt(mc.estimate) << ',' << fmt(mc.std_error) << ','
            << fmt(z) << ',' << (pass[t] ? "true" : "false") << '\n';
          rows[t] = r.str();
          if (!pass[t]) {
            st.ok = false;
            st.error = "closed form misses the Monte Carlo oracle by " + fmt(z) + " standard errors";
          }
        } catch (const std::exception& e) {
          st.ok = false;
          st.error = e.what();
        }
      });
      write_file(csv, kMomentsHeader, rows);
      report.csv_files.push_back(csv.string());
      std::size_t failed = 0;
      for (const auto& st : report.points) failed += st.ok ? 0 : 1;
      report.ok = failed == 0;
      summary["checked"] = tasks.size();
      summary["failed"] = failed;
      report.notes.push_back(std::to_string(tasks.size() - failed) + "/" + std::to_string(tasks.size()) +
                             " moment checks within 4 standard errors");
      break;
    }
    case Command::Asymptotics: {
      const TrainConfig& t = spec.train;
      const int M = static_cast<int>(t.M);
      const int K = static_cast<int>(t.K);
      std::vector<std::string> rows;
      for (auto L64 : spec.asymptotics.L) {
        const int L = static_cast<int>(L64);
        for (double eta : spec.sweep.eta) {
          for (double sigma : spec.sweep.sigma) {
            const auto emit = [&](const char* name, const std::function<double()>& f) {
              std::string status = "ok";
              std::string value;
              try {
                value = fmt(f());
              } catch (const Error& e) {
                status = std::string(to_string(e.code()));
              }
              std::ostringstream r;
              r << name << ',' << M << ',' << L << ',' << K << ',' << fmt(spec.asymptotics.T) << ','
                << fmt(eta) << ',' << fmt(sigma) << ',' << fmt(t.v_star) << ',' << value << ',' << status
                << '\n';
              rows.push_back(r.str());
            };
            emit("scm_erf_small_eta", [&] { return eg_scm_erf_small_eta(M, L, eta, sigma); });
            emit("scm_erf_perturbative", [&] { return perturbative_eg(ReducedScmSystem{M, L}, eta, sigma); });
            emit("scm_linear", [&] { return eg_scm_linear(M, L, eta, sigma); });
            emit("scm_linear_perturbative",
                 [&] { return perturbative_eg(ReducedScmSystem{M, L, Activation::Linear}, eta, sigma); });
            if (M == 1) emit("both_erf_m1", [&] { return eg_both_erf_m1(K, eta, sigma, t.v_star); });
            if (K % M == 0) {
              emit("both_erf_perturbative",
                   [&] { return perturbative_eg(DenoisingSystem{M, K / M}, eta, sigma, t.v_star); });
            }
            emit("perceptron", [&] { return eg_perceptron(spec.asymptotics.T, eta, sigma); });
            emit("perceptron_perturbative",
                 [&] { return perturbative_eg(PerceptronSystem{spec.asymptotics.T}, eta, sigma); });
            emit("eta_max", [&] { return eta_max(M); });
          }
        }
      }
      write_file(csv, kAsymptoticsHeader, rows);
      report.csv_files.push_back(csv.string());
      break;
    }
  }

  json m;
  m["tool"] = "committee-flow";
  m["command"] = std::string(to_string(spec.command));
  m["figure"] = spec.figure;
  m["created"] = timestamp();
  m["wall_seconds"] =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  m["threads"] = worker_count();
  m["config"] = spec.resolved;
  m["seed_derivation"] =
      "stream s of seed x: splitmix64(x + (s + 1) * 0x9E3779B97F4A7C15); streams 0 teacher, 1 student, "
      "2 label noise, 3 fixed set, 4 inputs, 5 second-layer init";
  json pts = json::array();
  for (const auto& p : report.points) {
    json e;
    e["index"] = p.index;
    e["point"] = p.label;
    e["status"] = p.ok ? "ok" : "failed";
    if (!p.ok) e["error"] = p.error;
    pts.push_back(e);
  }
  m["points"] = pts;
  m["outputs"] = report.csv_files;
  m["summary"] = summary;
  m["ok"] = report.ok;
  std::ofstream mf(manifest_path);
  if (!mf) throw Error(ErrorCode::Io, "cannot write " + manifest_path.string());
  mf << m.dump(2) << '\n';
  report.manifest = manifest_path.string();
  for (const auto& n : report.notes) log << n << '\n';
  return report;
}

}  // namespace cflow::lab
