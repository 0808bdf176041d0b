#include "cflow/activation.hpp"

#include <algorithm>
#include <cctype>
#include <string>

#include "cflow/error.hpp"

namespace cflow {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::DimensionMismatch: return "dimension mismatch";
    case ErrorCode::InvalidArgument: return "invalid argument";
    case ErrorCode::NotPositiveSemidefinite: return "not positive semidefinite";
    case ErrorCode::DomainError: return "domain error";
    case ErrorCode::NonFinite: return "non-finite value";
    case ErrorCode::Divergence: return "divergence";
    case ErrorCode::SingularJacobian: return "singular jacobian";
    case ErrorCode::ManifoldViolation: return "manifold violation";
    case ErrorCode::Format: return "format error";
    case ErrorCode::Io: return "i/o error";
    case ErrorCode::Config: return "config error";
  }
  return "error";
}

std::string_view to_string(Activation act) {
  switch (act) {
    case Activation::Erf: return "erf";
    case Activation::ReLU: return "relu";
    case Activation::Linear: return "linear";
  }
  return "unknown";
}

Activation parse_activation(std::string_view text) {
  std::string lower(text);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (lower == "erf") return Activation::Erf;
  if (lower == "relu") return Activation::ReLU;
  if (lower == "linear" || lower == "lin") return Activation::Linear;
  throw Error(ErrorCode::InvalidArgument, "unknown activation '" + std::string(text) + "'");
}

}  // namespace cflow
