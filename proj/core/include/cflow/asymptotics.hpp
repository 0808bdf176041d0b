#pragma once

namespace cflow {

/// Small-eta asymptote of an Erf soft committee machine with K = M + L:
///   sigma^2 eta (L + M / sqrt(3)) / (2 pi).
double eg_scm_erf_small_eta(int M, int L, double eta, double sigma);

/// Linear soft committee machine: eta sigma^2 (L+M) / (4 - 2 eta (L+M)).
/// Throws Divergence when eta (L + M) >= 2.
double eg_scm_linear(int M, int L, double eta, double sigma);

/// Erf network with both layers trained, M = 1: eta (sigma v*)^2 / (2 sqrt(3) K pi).
double eg_both_erf_m1(int K, double eta, double sigma, double v_star);

/// Noisy Erf perceptron with teacher norm T:
///   eta sigma^2 (4T+1) / (2 sqrt(2T+1) (pi (4T+1) - eta sqrt(8T^2+6T+1))).
/// Throws Divergence when the denominator is not positive.
double eg_perceptron(double T, double eta, double sigma);

/// Largest learning rate with exponential convergence for K = M, sigma = 0:
///   sqrt(3) pi / (M + 3/sqrt(5) - 1).
double eta_max(int M);

}  // namespace cflow
