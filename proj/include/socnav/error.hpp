#pragma once

#include <stdexcept>
#include <string>

namespace socnav {

// Exception hierarchy. The CLI maps each class onto a stable exit code.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// File missing, unreadable or unwritable.
class IoError : public Error {
 public:
  using Error::Error;
};

// Malformed text input. `line()` is 1-based, 0 when not tied to a line.
class ParseError : public Error {
 public:
  ParseError(const std::string& source, int line, const std::string& what);
  int line() const { return line_; }

 private:
  int line_;
};

// Invalid configuration value or incompatible combination of inputs.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Non-finite value in a numeric computation.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace socnav
