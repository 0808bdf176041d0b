#include "cflow/asymptotics.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "cflow/error.hpp"

namespace cflow {

namespace {

void check_rates(double eta, double sigma) {
  if (eta < 0.0 || sigma < 0.0 || !std::isfinite(eta) || !std::isfinite(sigma)) {
    throw Error(ErrorCode::InvalidArgument, "eta and sigma must be finite and >= 0");
  }
}

void check_sizes(int M, int L) {
  if (M < 1 || L < 0) throw Error(ErrorCode::InvalidArgument, "need M >= 1 and L >= 0");
}

}  // namespace

double eg_scm_erf_small_eta(int M, int L, double eta, double sigma) {
  check_sizes(M, L);
  check_rates(eta, sigma);
  return sigma * sigma * eta * (L + M / std::numbers::sqrt3) / (2.0 * std::numbers::pi);
}

double eg_scm_linear(int M, int L, double eta, double sigma) {
  check_sizes(M, L);
  check_rates(eta, sigma);
  const double k = static_cast<double>(L + M);
  const double denom = 4.0 - 2.0 * eta * k;
  if (denom <= 0.0) {
    throw Error(ErrorCode::Divergence,
                "eta (L + M) = " + std::to_string(eta * k) + " >= 2, no stationary error");
  }
  return eta * sigma * sigma * k / denom;
}

double eg_both_erf_m1(int K, double eta, double sigma, double v_star) {
  if (K < 1) throw Error(ErrorCode::InvalidArgument, "need K >= 1");
  check_rates(eta, sigma);
  const double sv = sigma * v_star;
  return eta * sv * sv / (2.0 * std::numbers::sqrt3 * K * std::numbers::pi);
}

double eg_perceptron(double T, double eta, double sigma) {
  check_rates(eta, sigma);
  if (!(T >= 0.0)) throw Error(ErrorCode::InvalidArgument, "teacher norm must be >= 0");
  const double denom = -eta * std::sqrt(8.0 * T * T + 6.0 * T + 1.0) + 4.0 * std::numbers::pi * T +
                       std::numbers::pi;
  if (denom <= 0.0) throw Error(ErrorCode::Divergence, "learning rate beyond the perceptron's stable range");
  return eta * sigma * sigma * (4.0 * T + 1.0) / (2.0 * std::sqrt(2.0 * T + 1.0) * denom);
}

double eta_max(int M) {
  if (M < 1) throw Error(ErrorCode::InvalidArgument, "need M >= 1");
  return std::numbers::sqrt3 * std::numbers::pi / (M + 3.0 / std::sqrt(5.0) - 1.0);
}

}  // namespace cflow
