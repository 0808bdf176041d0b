#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace cflow {

struct LineFit {
  double slope = 0.0;
  double intercept = 0.0;
  double slope_error = 0.0;  // bootstrap std dev when available, else OLS std error
  bool degenerate = false;   // fewer than 2 distinct x, or non-positive data on a log axis
};

/// Ordinary least squares y = slope * x + intercept.
LineFit linear_fit(std::span<const double> x, std::span<const double> y);

/// Least squares of log y against log x. Non-positive entries make the
/// fit degenerate (slope NaN).
LineFit loglog_fit(std::span<const double> x, std::span<const double> y);

/// Log-log fit of the per-x means of replicate samples, with the slope
/// error estimated by resampling replicates within each x.
LineFit loglog_fit_bootstrap(std::span<const double> x,
                             const std::vector<std::vector<double>>& replicates,
                             int resamples = 1000, std::uint64_t seed = 0);

double mean(std::span<const double> v);
/// Standard error of the mean (0 for fewer than two values).
double standard_error(std::span<const double> v);

}  // namespace cflow
