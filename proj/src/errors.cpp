#include "branchlab/errors.hpp"

namespace branchlab {

const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::UnsupportedOrder: return "unsupported-order";
    case ErrorCode::DimensionMismatch: return "dimension-mismatch";
    case ErrorCode::SizeLimit: return "size-limit";
    case ErrorCode::InvalidInput: return "invalid-input";
    case ErrorCode::DegenerateInput: return "degenerate-input";
    case ErrorCode::Numerical: return "numerical";
    case ErrorCode::Estimation: return "estimation";
    case ErrorCode::Fit: return "fit";
    case ErrorCode::SlaveSolve: return "slave-solve";
    case ErrorCode::Bracketing: return "bracketing";
    case ErrorCode::Io: return "io";
  }
  return "unknown";
}

}  // namespace branchlab
