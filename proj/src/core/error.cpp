#include "core/error.hpp"

namespace lmdrop {

const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return "invalid argument";
    case ErrorCode::Io: return "i/o error";
    case ErrorCode::Parse: return "parse error";
    case ErrorCode::DegenerateLikelihood: return "degenerate likelihood";
    case ErrorCode::Numerical: return "numerical failure";
    case ErrorCode::NotConverged: return "not converged";
  }
  return "unknown error";
}

void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

}  // namespace lmdrop
