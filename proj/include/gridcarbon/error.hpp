#pragma once

#include <stdexcept>
#include <string>

namespace gridcarbon {

/// Coarse failure class; the CLI maps these onto exit codes.
enum class ErrorKind {
  Parse,        // malformed input file or field
  Validation,   // model invariant or cross-reference violation
  Infeasible,   // physically inconsistent snapshot (imbalance, unserved demand)
  Degenerate,   // degenerate numeric input (zero perturbation, all-zero fit)
  Io,           // file system failure
  Usage,        // bad CLI arguments
  Internal,     // should-be-impossible state; indicates a bug
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& msg)
      : std::runtime_error(msg), kind_(kind) {}

  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& msg) {
  throw Error(kind, msg);
}

}  // namespace gridcarbon
