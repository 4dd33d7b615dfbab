#pragma once

#include <stdexcept>
#include <string>

namespace xlit {

/// Bad inputs, violated preconditions, malformed files. CLI exit code 2.
class ValidationError : public std::runtime_error {
 public:
  explicit ValidationError(const std::string& what) : std::runtime_error(what) {}
};

/// Byte-level decoding problems (invalid UTF-8 and friends). CLI exit code 2.
class EncodingError : public ValidationError {
 public:
  explicit EncodingError(const std::string& what) : ValidationError(what) {}
};

/// Filesystem-level failures. CLI exit code 3.
class IoError : public std::runtime_error {
 public:
  explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

/// Non-finite values where finite ones are required. CLI exit code 4.
class NumericalError : public std::runtime_error {
 public:
  explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace xlit
