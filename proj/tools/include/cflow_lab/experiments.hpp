#pragma once

#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "cflow/network.hpp"
#include "cflow/sgd.hpp"
#include "cflow_lab/config.hpp"

namespace cflow::lab {

struct PointStatus {
  std::size_t index = 0;
  std::string label;  // e.g. "K=4 eta=0.2 sigma=0 seed=1"
  bool ok = true;
  std::string error;
};

struct ExperimentReport {
  std::vector<std::string> csv_files;
  std::string manifest;
  std::vector<PointStatus> points;
  std::vector<std::string> notes;  // summary lines also printed to the log
  bool ok = true;
};

/// Runs the command over its grid, writes <output_dir>/<figure>.csv plus
/// <figure>.manifest.json and returns what happened. Grid points run on up to
/// worker_count() threads; rows are written in grid order so the CSV body
/// depends only on the spec.
ExperimentReport run_experiment(const ExperimentSpec& spec, std::ostream& log);

/// min(COMMITTEE_FLOW_THREADS, hardware threads), at least 1.
unsigned worker_count();

/// Runs job(i) for i in [0, n) on worker_count() threads.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& job);

/// Student for a spec's grid point (random or specialised).
NetworkParams initial_student(const ExperimentSpec& spec, const TrainConfig& cfg,
                              const NetworkParams& teacher);

/// TrainConfig of grid point (K, eta, sigma, seed); eta sets both rates.
TrainConfig grid_config(const ExperimentSpec& spec, std::int64_t K, double eta, double sigma,
                        std::uint64_t seed);

}  // namespace cflow::lab
