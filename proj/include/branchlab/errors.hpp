#pragma once

#include <stdexcept>
#include <string>

namespace branchlab {

enum class ErrorCode {
  UnsupportedOrder,
  DimensionMismatch,
  SizeLimit,
  InvalidInput,
  DegenerateInput,
  Numerical,
  Estimation,
  Fit,
  SlaveSolve,
  Bracketing,
  Io,
};

const char* to_string(ErrorCode code);

/// Library-wide exception. Every failure raised by branchlab carries a code so
/// callers (and the experiment driver) can record what kind of stage failed.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace branchlab
