// committee-flow <command> [--config FILE] [key=value ...]

#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "cflow_lab/config.hpp"
#include "cflow_lab/experiments.hpp"

int main(int argc, char** argv) {
  using namespace cflow::lab;
  CLI::App app{"Online SGD and order-parameter ODE laboratory for two-layer networks"};
  app.set_help_flag("-h,--help", "Print this help and exit");

  std::string command;
  std::string config_path;
  std::vector<std::string> overrides;
  bool list_keys = false;
  app.add_option("command", command,
                 "simulate | ode | sweep | verify-theorem1 | moments-check | asymptotics");
  app.add_option("--config,-c", config_path, "Plain-text key=value config file");
  app.add_option("overrides", overrides, "key=value or section.key=value overrides");
  app.add_flag("--keys", list_keys, "List every config key with its default and exit");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }
  if (list_keys) {
    std::cout << describe_keys();
    return 0;
  }
  if (command.empty()) {
    std::cerr << app.help();
    return 2;
  }
  if (!parse_command(command)) {
    std::cerr << "unknown command '" << command << "'\n";
    return 2;
  }

  std::string text;
  if (!config_path.empty()) {
    std::ifstream in(config_path);
    if (!in) {
      std::cerr << "cannot open config file " << config_path << "\n";
      return 2;
    }
    std::ostringstream buf;
    buf << in.rdbuf();
    text = buf.str();
  }
  overrides.insert(overrides.begin(), "command=" + command);

  try {
    const ExperimentSpec spec = parse_config(text, overrides);
    const ExperimentReport report = run_experiment(spec, std::cerr);
    for (const auto& f : report.csv_files) std::cout << f << "\n";
    std::cout << report.manifest << "\n";
    if (!report.ok) {
      std::cerr << "one or more grid points failed; see " << report.manifest << "\n";
      return 1;
    }
  } catch (const cflow::Error& e) {
    std::cerr << e.what() << "\n";
    return e.code() == cflow::ErrorCode::Config ? 2 : 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
