#pragma once

#include <stdexcept>
#include <string>

namespace s3a {

// Broad failure classes; the CLI maps them onto exit codes.
enum class ErrorKind {
  kInvalidArgument,  // violated precondition or malformed input
  kIo,               // missing/unreadable/unwritable file
  kFormat,           // file present but does not match its declared layout
  kNumeric,          // NaN/Inf or a degenerate quantity (zero norm, empty mean)
  kInfeasible,       // assignment or grid problem with no valid solution
  kExternal,         // LLM client / transport failure
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) {
  throw Error(kind, what);
}

inline void require(bool ok, const std::string& what) {
  if (!ok) fail(ErrorKind::kInvalidArgument, what);
}

}  // namespace s3a
