#pragma once

#include <cmath>
#include <numbers>
#include <string_view>

namespace cflow {

enum class Activation { Erf, ReLU, Linear };

/// g(x). Erf is the scaled error function erf(x / sqrt(2)).
inline double activate(Activation act, double x) noexcept {
  switch (act) {
    case Activation::Erf:
      return std::erf(x * (1.0 / std::numbers::sqrt2));
    case Activation::ReLU:
      return x > 0.0 ? x : 0.0;
    case Activation::Linear:
      return x;
  }
  return 0.0;
}

/// g'(x). The ReLU derivative at 0 is taken to be 0.
inline double activate_prime(Activation act, double x) noexcept {
  switch (act) {
    case Activation::Erf:
      return std::sqrt(2.0 / std::numbers::pi) * std::exp(-0.5 * x * x);
    case Activation::ReLU:
      return x > 0.0 ? 1.0 : 0.0;
    case Activation::Linear:
      return 1.0;
  }
  return 0.0;
}

std::string_view to_string(Activation act);

/// Accepts "erf", "relu", "linear" (case-insensitive). Throws cflow::Error.
Activation parse_activation(std::string_view text);

}  // namespace cflow
