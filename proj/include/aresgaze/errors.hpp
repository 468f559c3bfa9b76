#pragma once

#include <stdexcept>
#include <string>

namespace ag {

/// Base class for all library errors.
class Error : public std::runtime_error {
public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Tensor extents do not satisfy an operation's contract.
class ShapeError : public Error {
public:
  explicit ShapeError(const std::string& msg) : Error("shape error: " + msg) {}
};

/// A layer or network configuration is invalid.
class ConfigError : public Error {
public:
  explicit ConfigError(const std::string& msg) : Error("config error: " + msg) {}
};

/// A numeric value is outside its valid domain (degenerate landmarks,
/// non-finite gradients, zero-length vectors, ...).
class ValueError : public Error {
public:
  explicit ValueError(const std::string& msg) : Error("value error: " + msg) {}
};

/// File-format or filesystem failure; message carries path context.
class IoError : public Error {
public:
  explicit IoError(const std::string& msg) : Error("io error: " + msg) {}
};

/// Malformed input file; message carries a byte offset or line number.
class ParseError : public Error {
public:
  explicit ParseError(const std::string& msg) : Error("parse error: " + msg) {}
};

}  // namespace ag
