#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace iterforge {

enum class ErrorCode {
  kInvalidArgument,
  kNotFound,
  kAlreadyExists,
  kFailedPrecondition,
  kIntegrity,
  kIo,
  kUnavailable,
  kResourceExhausted,
  kAborted,
  kInternal,
};

// Machine-readable name, e.g. "not_found". Used in API error bodies.
std::string_view to_string(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

}  // namespace iterforge
