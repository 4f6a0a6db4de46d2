#pragma once

#include <stdexcept>
#include <string>

namespace stabcp {

enum class ErrorKind {
  InvalidInput,
  State,
  Numerical,
  Parse,
  Io,
};

/// Base exception for every failure raised by the library. The kind drives
/// the CLI exit code.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

inline void require(bool condition, const std::string& message,
                    ErrorKind kind = ErrorKind::InvalidInput) {
  if (!condition) throw Error(kind, message);
}

}  // namespace stabcp
