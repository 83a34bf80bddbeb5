#pragma once

#include <stdexcept>
#include <string>

namespace affect {

// Base class for all library errors.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Shape or dimension disagreement between operands.
struct DimensionError : Error {
  using Error::Error;
};

// Invalid argument other than a shape problem (empty input, bad flag value).
struct ArgumentError : Error {
  using Error::Error;
};

// Malformed input file. Carries the 1-based line number when known;
// line 0 means no line applies (binary or whole-document formats).
struct ParseError : Error {
  explicit ParseError(const std::string& msg) : Error(msg), line(0) {}
  ParseError(const std::string& msg, long line_no)
      : Error(msg + " (line " + std::to_string(line_no) + ")"), line(line_no) {}
  long line;
};

// Semantically invalid data (zero-norm row, non-finite value, ...).
struct DataError : Error {
  using Error::Error;
};

// An iterative numeric routine failed to converge.
struct NumericError : Error {
  using Error::Error;
};

// Filesystem or OS-level failure.
struct IoError : Error {
  using Error::Error;
};

// A statistic is undefined on the given input (e.g. zero-variance CCC).
struct DegenerateError : Error {
  using Error::Error;
};

}  // namespace affect
