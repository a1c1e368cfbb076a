#pragma once

#include <stdexcept>
#include <string>

namespace krot {

/// Error categories shared by the C++ core and the C API status codes.
enum class ErrorCode : int {
  kInvalidArgument = 1,  // malformed input: shapes, ranges, schema violations
  kDomain = 2,           // mathematically undefined request (null-set conditioning, non-SPD, ...)
  kSolver = 3,           // iterative solver failed to reach its tolerance
  kIo = 4,               // file system / parse failures
  kInternal = 5,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message) : std::runtime_error(message), code_(code) {}
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

/// Raised when an iterative solve stops before reaching its tolerance.
/// Carries the last measured violation so callers can decide what to do.
class SolverError : public Error {
 public:
  SolverError(const std::string& message, double last_violation)
      : Error(ErrorCode::kSolver, message), last_violation_(last_violation) {}
  double last_violation() const noexcept { return last_violation_; }

 private:
  double last_violation_;
};

[[noreturn]] void throw_invalid(const std::string& message);
[[noreturn]] void throw_domain(const std::string& message);

}  // namespace krot
