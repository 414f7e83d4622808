#pragma once

#include <stdexcept>
#include <string>

namespace gwpdti {

enum class ErrorKind {
  invalid_input,  // non-finite or malformed arguments
  domain,         // e.g. matrix_log of a non-SPD matrix
  parse,          // malformed file content
  validation,     // well-formed but inconsistent data
  estimation,     // rank-deficient tensor fit
  conditioning,   // Cholesky failed after jitter escalation
  numerical,      // non-finite values inside an algorithm
  provenance,     // archive/data checksum mismatch
  usage,          // bad arguments at an API or CLI boundary
  io,
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

const char* to_string(ErrorKind kind) noexcept;

}  // namespace gwpdti
