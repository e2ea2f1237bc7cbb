#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace bnn {

// Root of every exception thrown by the library. The CLI maps each subclass
// onto a distinct exit code.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Two objects that must agree in size do not.
class DimensionError : public Error {
 public:
  DimensionError(const std::string& what, std::size_t expected, std::size_t actual)
      : Error(what + ": expected " + std::to_string(expected) + ", got " +
              std::to_string(actual)),
        expected_(expected),
        actual_(actual) {}

  std::size_t expected() const { return expected_; }
  std::size_t actual() const { return actual_; }

 private:
  std::size_t expected_;
  std::size_t actual_;
};

// A value is outside its legal domain (non-finite, out of range, ...).
class ValueError : public Error {
 public:
  using Error::Error;
};

// Malformed file content. `position` is a byte offset for binary formats and
// a 1-based line number for text formats; `column` is 0 when not applicable.
class FormatError : public Error {
 public:
  FormatError(const std::string& what, std::size_t position, std::size_t column = 0)
      : Error(what), position_(position), column_(column) {}

  std::size_t position() const { return position_; }
  std::size_t column() const { return column_; }

 private:
  std::size_t position_;
  std::size_t column_;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class CalibrationError : public Error {
 public:
  using Error::Error;
};

}  // namespace bnn
