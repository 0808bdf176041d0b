#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "json.hpp"

#include "cflow_lab/config.hpp"
#include "cflow_lab/experiments.hpp"

using namespace cflow;
using namespace cflow::lab;
namespace fs = std::filesystem;

namespace {

std::string config_error(std::string_view text, const std::vector<std::string>& overrides = {}) {
  try {
    parse_config(text, overrides);
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::Config);
    return e.what();
  }
  ADD_FAILURE() << "config accepted:\n" << text;
  return {};
}

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("cflow_cli_test_" + name);
  fs::remove_all(dir);
  return dir;
}

}  // namespace

TEST(ParseConfig, AsymptoticsDefaults) {
  const auto spec = parse_config("", {"command=asymptotics", "M=1"});
  EXPECT_EQ(spec.command, Command::Asymptotics);
  EXPECT_EQ(spec.figure, "asymptotics");
  EXPECT_EQ(spec.train.M, 1);
  ASSERT_EQ(spec.asymptotics.L.size(), 1u);
  EXPECT_EQ(spec.asymptotics.L[0], 0);
  EXPECT_EQ(spec.asymptotics.T, 1.0);
  EXPECT_EQ(spec.train.steps, 200 * spec.train.N);
}

TEST(ParseConfig, FigureOneParameterLine) {
  const auto spec = parse_config("command = simulate\neta=0.2\nN=784\nM=4\nK=4\nactivation=erf\n");
  EXPECT_EQ(spec.train.N, 784);
  EXPECT_EQ(spec.train.M, 4);
  EXPECT_EQ(spec.train.K, 4);
  EXPECT_EQ(spec.train.eta_w, 0.2);
  EXPECT_EQ(spec.train.eta_v, 0.0);  // second layer frozen in SCM mode
  EXPECT_EQ(spec.train.activation, Activation::Erf);
  EXPECT_EQ(spec.train.mode, TrainMode::SCM);
}

TEST(ParseConfig, SectionsCommentsAndOverrides) {
  const char* text =
      "# a comment\n"
      "command = sweep   # trailing comment\n"
      "[run]\n"
      "N = 100\n"
      "eta = 0.1\n"
      "eta_v = 0.3\n"
      "mode = both\n"
      "alpha = 2.5\n"
      "[sweep]\n"
      "K = 2, 3,4\n"
      "seed = 1,2\n";
  const auto spec = parse_config(text, {"run.N=200", "sweep.sigma=0,0.01"});
  EXPECT_EQ(spec.train.N, 200);
  EXPECT_EQ(spec.train.eta_w, 0.1);
  EXPECT_EQ(spec.train.eta_v, 0.3);
  EXPECT_EQ(spec.train.mode, TrainMode::BothLayers);
  EXPECT_EQ(spec.train.steps, 500);
  EXPECT_EQ(spec.sweep.K, (std::vector<std::int64_t>{2, 3, 4}));
  EXPECT_EQ(spec.sweep.sigma, (std::vector<double>{0.0, 0.01}));
  EXPECT_EQ(spec.sweep.eta, (std::vector<double>{0.1}));
  EXPECT_EQ(spec.sweep.size(), 12u);
  EXPECT_EQ(spec.resolved.at("run.N"), "200");
  EXPECT_EQ(spec.resolved.at("run.eta_v"), "0.29999999999999999");
}

TEST(ParseConfig, ErrorsCarryLineNumbers) {
  EXPECT_NE(config_error("command = sweep\nK = 0\n").find("line 2"), std::string::npos);
  EXPECT_NE(config_error("command = sweep\n\nbogus = 1\n").find("line 3"), std::string::npos);
  EXPECT_NE(config_error("command = sweep\n[run]\nN = 7.5\n").find("line 3"), std::string::npos);
  EXPECT_NE(config_error("command = sweep\n[nowhere]\n").find("line 2"), std::string::npos);
  EXPECT_NE(config_error("command = sweep\nactivation = tanh\n").find("line 2"), std::string::npos);
  EXPECT_NE(config_error("command = sweep\n[run]\nthis line has no equals\n").find("line 3"),
            std::string::npos);
  EXPECT_NE(config_error("command = sweep\n", {"K=0"}).find("override 'K=0'"), std::string::npos);
}

TEST(ParseConfig, ValidationErrors) {
  EXPECT_NE(config_error("N = 10\n").find("missing required key 'command'"), std::string::npos);
  EXPECT_NE(config_error("command = sweep\n[sweep]\nK =\n").find("empty list"), std::string::npos);
  EXPECT_NE(config_error("command = sweep\n[sweep]\neta = , ,\n").find("line 3"), std::string::npos);
  config_error("command = sweep\nsteps = 10\nalpha = 1\n");
  config_error("command = sweep\nsigma = -1\n");
  config_error("command = sweep\nM = 3\nK = 2\nmode = both\nstudent_init = denoising\nsteps=1\n"
               "input = idx\n");
  config_error("command = verify-theorem1\n[theorem1]\nN_list = 100, 1000\n");
  config_error("command = verify-theorem1\n[theorem1]\nN_list = 100, 200, 400\n");
  config_error("command = launch\n");
}

TEST(RunExperiment, SweepIsByteIdenticalOnRerun) {
  const fs::path dir = scratch("sweep");
  const std::string text =
      "command = sweep\nfigure = tiny\nN = 40\nM = 2\nK = 2\nalpha = 4\nrecord_alpha = 0.5\n"
      "[sweep]\nK = 2, 3\nsigma = 0, 0.1\nseed = 1, 2\n";
  const auto spec = parse_config(text, {"output_dir=" + dir.string()});
  std::ostringstream log;
  const auto a = run_experiment(spec, log);
  ASSERT_TRUE(a.ok) << log.str();
  ASSERT_EQ(a.csv_files.size(), 1u);
  const std::string first = slurp(a.csv_files[0]);
  const auto b = run_experiment(spec, log);
  EXPECT_EQ(first, slurp(b.csv_files[0]));

  std::istringstream lines(first);
  std::string header, row;
  std::getline(lines, header);
  EXPECT_EQ(header, "figure,activation,mode,N,M,K,eta,sigma,seed,alpha_final,eg_final,eg_early_stop");
  int rows = 0;
  while (std::getline(lines, row)) {
    ++rows;
    EXPECT_EQ(row.rfind("tiny,erf,scm,40,2,", 0), 0u) << row;
  }
  EXPECT_EQ(rows, 8);

  const auto manifest = nlohmann::json::parse(slurp(a.manifest));
  EXPECT_EQ(manifest["command"], "sweep");
  EXPECT_EQ(manifest["config"]["sweep.K"], "2,3");
  EXPECT_EQ(manifest["config"]["run.N"], "40");
  EXPECT_EQ(manifest["points"].size(), 8u);
  EXPECT_TRUE(manifest["ok"].get<bool>());
  fs::remove_all(dir);
}

TEST(RunExperiment, SimulateWithOdeOverlay) {
  const fs::path dir = scratch("simulate");
  const auto spec = parse_config(
      "command = simulate\nN = 200\nM = 2\nK = 2\neta = 0.2\nalpha = 3\nrecord_alpha = 1\n"
      "ode_overlay = true\n[ode]\nd_alpha = 0.01\n",
      {"output_dir=" + dir.string()});
  std::ostringstream log;
  const auto r = run_experiment(spec, log);
  ASSERT_TRUE(r.ok) << log.str();
  std::istringstream lines(slurp(r.csv_files[0]));
  std::string header, row;
  std::getline(lines, header);
  EXPECT_EQ(header, "figure,activation,mode,N,M,K,eta,sigma,seed,step,alpha,eg_sim,eg_ode,train_loss,eg_min");
  int rows = 0;
  while (std::getline(lines, row)) {
    ++rows;
    EXPECT_EQ(std::count(row.begin(), row.end(), ','), 14) << row;
  }
  EXPECT_EQ(rows, 4);  // alpha = 0, 1, 2, 3
  fs::remove_all(dir);
}

TEST(RunExperiment, FailedGridPointIsReported) {
  const fs::path dir = scratch("diverge");
  const auto spec = parse_config(
      "command = sweep\nN = 50\nM = 1\nK = 1\nactivation = linear\nalpha = 20\n[sweep]\neta = 0.1, 50\n",
      {"output_dir=" + dir.string()});
  std::ostringstream log;
  const auto r = run_experiment(spec, log);
  EXPECT_FALSE(r.ok);
  ASSERT_EQ(r.points.size(), 2u);
  EXPECT_TRUE(r.points[0].ok);
  EXPECT_FALSE(r.points[1].ok);
  const auto manifest = nlohmann::json::parse(slurp(r.manifest));
  EXPECT_FALSE(manifest["ok"].get<bool>());
  EXPECT_EQ(manifest["points"][1]["status"], "failed");
  fs::remove_all(dir);
}

TEST(RunExperiment, AsymptoticsTable) {
  const fs::path dir = scratch("asym");
  const auto spec = parse_config("", {"command=asymptotics", "M=1", "K=2", "eta=0.05", "sigma=0.01",
                                      "v_star=2", "output_dir=" + dir.string()});
  std::ostringstream log;
  const auto r = run_experiment(spec, log);
  ASSERT_TRUE(r.ok);
  const std::string body = slurp(r.csv_files[0]);
  EXPECT_NE(body.find("quantity,M,L,K,T,eta,sigma,v_star,value,status"), std::string::npos);
  for (const char* q : {"scm_erf_small_eta", "scm_erf_perturbative", "scm_linear,", "both_erf_m1",
                        "both_erf_perturbative", "perceptron,", "eta_max"})
    EXPECT_NE(body.find(q), std::string::npos) << q;
  fs::remove_all(dir);
}

TEST(RunExperiment, Theorem1DegenerateAtZeroRate) {
  const fs::path dir = scratch("t1");
  const auto spec = parse_config(
      "command = verify-theorem1\nM = 2\nK = 2\neta = 0\n[theorem1]\nN_list = 20, 60, 200\nhorizon = 1\n"
      "seeds = 1\nbootstrap = 10\n",
      {"output_dir=" + dir.string()});
  std::ostringstream log;
  const auto r = run_experiment(spec, log);
  ASSERT_EQ(r.csv_files.size(), 2u);
  const std::string fit = slurp(r.csv_files[1]);
  EXPECT_NE(fit.find(",true,true"), std::string::npos) << fit;
  std::istringstream lines(slurp(r.csv_files[0]));
  std::string row;
  std::getline(lines, row);
  while (std::getline(lines, row)) EXPECT_NE(row.find(",0,0,1"), std::string::npos) << row;
}

TEST(RunExperiment, MomentsCheckPasses) {
  const fs::path dir = scratch("moments");
  const auto spec = parse_config("command = moments-check\n[moments]\nsamples = 20000\ncovariances = 3\n",
                                 {"output_dir=" + dir.string()});
  std::ostringstream log;
  const auto r = run_experiment(spec, log);
  EXPECT_TRUE(r.ok) << log.str();
  EXPECT_EQ(r.points.size(), 36u);
  fs::remove_all(dir);
}

TEST(ParseConfig, ShippedConfigsAreValid) {
  int seen = 0;
  for (const auto& entry : fs::directory_iterator(CFLOW_CONFIG_DIR)) {
    if (entry.path().extension() != ".conf") continue;
    ++seen;
    EXPECT_NO_THROW(parse_config(slurp(entry.path().string()))) << entry.path();
  }
  EXPECT_GE(seen, 5);
}
