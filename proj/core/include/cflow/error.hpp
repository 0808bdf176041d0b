#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace cflow {

enum class ErrorCode {
  DimensionMismatch,
  InvalidArgument,
  NotPositiveSemidefinite,
  DomainError,
  NonFinite,
  Divergence,
  SingularJacobian,
  ManifoldViolation,
  Format,
  Io,
  Config,
};

std::string_view to_string(ErrorCode code);

/// Every failure raised by the library carries one of the codes above so
/// callers (and the CLI) can branch on the category without parsing text.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace cflow
