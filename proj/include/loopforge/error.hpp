#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace loopforge {

enum class ErrorCode {
  invalid_argument,  // precondition violated by the caller
  parse,             // malformed input file or reply
  not_found,
  already_exists,
  capability,        // backend cannot perform the requested operation
  transport,         // network failure; retryable
  protocol,          // server answered with something we cannot use
  digest_mismatch,
  training,
  io,
};

std::string_view to_string(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) {
  throw Error(code, what);
}

inline void require(bool condition, const std::string& what) {
  if (!condition) throw Error(ErrorCode::invalid_argument, what);
}

}  // namespace loopforge
