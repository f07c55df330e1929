#pragma once

#include <stdexcept>
#include <string>

namespace lmdrop {

enum class ErrorCode {
  InvalidArgument,
  Io,
  Parse,
  DegenerateLikelihood,
  Numerical,
  NotConverged,
};

const char* to_string(ErrorCode code);

// Single exception type for the core; the C layer maps `code()` onto status values.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] void fail(ErrorCode code, const std::string& message);

}  // namespace lmdrop
