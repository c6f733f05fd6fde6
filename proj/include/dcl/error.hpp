#pragma once

#include <stdexcept>
#include <string>

namespace dcl {

// Mirrors dcl_status in the C API; values are stable.
enum class ErrorCode : int {
  kInvalidArgument = 1,
  kConfig = 2,
  kNumeric = 3,
  kCheckFailed = 4,
  kMissingInput = 5,
  kIo = 6,
  kInternal = 7,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) { throw Error(code, what); }

inline void require(bool cond, const std::string& what) {
  if (!cond) throw Error(ErrorCode::kInvalidArgument, what);
}

}  // namespace dcl
