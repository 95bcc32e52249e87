// Exception hierarchy shared by every fedprio module.
#pragma once

#include <stdexcept>
#include <string>

namespace fedprio {

/// Base of all library errors. `exit_code()` follows the CLI contract:
/// 1 for validation problems, 2 for runtime failures.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  [[nodiscard]] virtual int exit_code() const noexcept { return 2; }
};

/// Invalid configuration or parameters (bad fraction, unknown criterion, too few samples).
class ConfigError : public Error {
 public:
  using Error::Error;
  [[nodiscard]] int exit_code() const noexcept override { return 1; }
};

/// A function was called outside its contract (empty batch, misaligned vectors).
class UsageError : public Error {
 public:
  using Error::Error;
  [[nodiscard]] int exit_code() const noexcept override { return 1; }
};

/// Malformed input file.
class FormatError : public Error {
 public:
  using Error::Error;
  [[nodiscard]] int exit_code() const noexcept override { return 1; }
};

/// Broken internal invariant (negative raw criterion, length mismatch between models).
class InternalError : public Error {
 public:
  using Error::Error;
};

/// Failure while executing a run, e.g. a client produced non-finite parameters.
class RuntimeFailure : public Error {
 public:
  using Error::Error;
};

}  // namespace fedprio
