#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "cflow/activation.hpp"
#include "cflow/error.hpp"
#include "cflow/ode.hpp"
#include "cflow/sgd.hpp"

namespace cflow::lab {

enum class Command { Simulate, Ode, Sweep, VerifyTheorem1, MomentsCheck, Asymptotics };

std::string_view to_string(Command c);
std::optional<Command> parse_command(std::string_view name);

/// Grid axes; every combination is one independent grid point.
struct SweepAxes {
  std::vector<std::int64_t> K;
  std::vector<double> eta;
  std::vector<double> sigma;
  std::vector<std::uint64_t> seed;
  std::size_t size() const { return K.size() * eta.size() * sigma.size() * seed.size(); }
};

enum class StudentInit {
  Random,       // per TrainConfig (the usual start)
  Specialised,  // first M units copy the teacher, the rest ~ N(0, surplus_std^2)
  Denoising,    // unit i copies teacher unit i mod M, v shared within each group
};

struct Theorem1Params {
  std::vector<std::int64_t> N_list{250, 1000, 4000};
  double horizon = 10.0;
  int seeds = 10;
  int bootstrap = 1000;
  double record_alpha = 0.1;
};

struct MomentsParams {
  std::int64_t samples = 1000000;
  int covariances = 100;
  std::vector<Activation> activations{Activation::Erf, Activation::ReLU, Activation::Linear};
};

struct AsymptoticsParams {
  std::vector<std::int64_t> L{0};
  double T = 1.0;
};

struct ExperimentSpec {
  Command command = Command::Simulate;
  std::string figure;
  std::string output_dir = "out";

  TrainConfig train;
  StudentInit student_init = StudentInit::Random;
  double surplus_std = 1e-3;
  double record_alpha = 1.0;
  double late_fraction = 0.05;
  bool ode_overlay = false;

  Integrator integrator = Integrator::Euler;
  double d_alpha = 1e-3;
  double alpha_max = 0.0;  // ode command; defaults to steps / N

  SweepAxes sweep;
  Theorem1Params theorem1;
  MomentsParams moments;
  AsymptoticsParams asymptotics;

  /// Every key with its final textual value, for the manifest.
  std::map<std::string, std::string> resolved;
};

/// Parses the plain-text format
///
///   # comment
///   command = sweep
///   [run]
///   N = 784
///   eta = 0.05          # sets eta_w and eta_v
///   [sweep]
///   K = 2, 3, 4
///
/// `overrides` are `key=value` or `section.key=value` strings applied after
/// the file; a bare key must be unambiguous. Errors carry the line number
/// (or the offending override) and are raised as Error(Config).
ExperimentSpec parse_config(std::string_view text, const std::vector<std::string>& overrides = {});

/// Human-readable list of sections and keys with their defaults.
std::string describe_keys();

}  // namespace cflow::lab
