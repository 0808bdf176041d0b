#include "cflow/stats.hpp"

#include <cmath>
#include <limits>

#include <boost/random/uniform_int_distribution.hpp>

#include "cflow/error.hpp"
#include "cflow/random.hpp"

namespace cflow {

double mean(std::span<const double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double standard_error(std::span<const double> v) {
  if (v.size() < 2) return 0.0;
  const double m = mean(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  const double n = static_cast<double>(v.size());
  return std::sqrt(ss / (n - 1.0) / n);
}

LineFit linear_fit(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw Error(ErrorCode::DimensionMismatch, "fit needs equal-length x and y");
  LineFit fit;
  const std::size_t n = x.size();
  const double mx = mean(x);
  const double my = mean(y);
  double sxx = 0.0;
  double sxy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  if (n < 2 || !(sxx > 0.0)) {
    fit.degenerate = true;
    fit.slope = std::numeric_limits<double>::quiet_NaN();
    fit.intercept = std::numeric_limits<double>::quiet_NaN();
    return fit;
  }
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  if (n > 2) {
    double rss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double r = y[i] - fit.intercept - fit.slope * x[i];
      rss += r * r;
    }
    fit.slope_error = std::sqrt(rss / static_cast<double>(n - 2) / sxx);
  }
  return fit;
}

LineFit loglog_fit(std::span<const double> x, std::span<const double> y) {
  std::vector<double> lx;
  std::vector<double> ly;
  for (std::size_t i = 0; i < x.size() && i < y.size(); ++i) {
    if (!(x[i] > 0.0) || !(y[i] > 0.0)) {
      LineFit bad;
      bad.degenerate = true;
      bad.slope = bad.intercept = std::numeric_limits<double>::quiet_NaN();
      return bad;
    }
    lx.push_back(std::log(x[i]));
    ly.push_back(std::log(y[i]));
  }
  return linear_fit(lx, ly);
}

LineFit loglog_fit_bootstrap(std::span<const double> x,
                             const std::vector<std::vector<double>>& replicates, int resamples,
                             std::uint64_t seed) {
  if (x.size() != replicates.size()) {
    throw Error(ErrorCode::DimensionMismatch, "one replicate list per x value is required");
  }
  std::vector<double> means;
  for (const auto& r : replicates) means.push_back(mean(r));
  LineFit fit = loglog_fit(x, means);
  if (fit.degenerate || resamples < 2) return fit;

  Rng rng(seed);
  std::vector<double> slopes;
  std::vector<double> boot(x.size());
  for (int b = 0; b < resamples; ++b) {
    for (std::size_t i = 0; i < x.size(); ++i) {
      const auto& r = replicates[i];
      boost::random::uniform_int_distribution<std::size_t> pick(0, r.size() - 1);
      double s = 0.0;
      for (std::size_t k = 0; k < r.size(); ++k) s += r[pick(rng)];
      boot[i] = s / static_cast<double>(r.size());
    }
    const LineFit f = loglog_fit(x, boot);
    if (!f.degenerate) slopes.push_back(f.slope);
  }
  if (slopes.size() >= 2) {
    const double m = mean(slopes);
    double ss = 0.0;
    for (double s : slopes) ss += (s - m) * (s - m);
    fit.slope_error = std::sqrt(ss / static_cast<double>(slopes.size() - 1));
  }
  return fit;
}

}  // namespace cflow
