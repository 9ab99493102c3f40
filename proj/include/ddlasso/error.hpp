#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace ddlasso {

enum class ErrorKind {
  InvalidArgument,
  NonFinite,
  DimensionMismatch,
  IndexOutOfRange,
  ConvergenceFailure,
  MaxIterExceeded,
  DegenerateFolds,
  DegenerateDenominator,
  NotPositiveDefinite,
  SingularSystem,
  OutOfRange,
};

std::string_view to_string(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace ddlasso
