#pragma once

#include <stdexcept>
#include <string>

namespace spdc {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Argument outside the mathematical domain of an operation.
struct DomainError : Error {
  using Error::Error;
};

/// Pixel index outside the logical grid.
struct IndexError : Error {
  using Error::Error;
};

struct CalibrationMissing : Error {
  using Error::Error;
};

struct OutOfActiveArea : Error {
  using Error::Error;
};

struct ConfigError : Error {
  using Error::Error;
};

struct IoError : Error {
  using Error::Error;
};

/// Malformed input file; carries the 1-based line number.
struct ParseError : Error {
  ParseError(const std::string& what, long line)
      : Error(what + " (line " + std::to_string(line) + ")"), line(line) {}
  long line;
};

/// Input stream unsorted beyond what the reorder buffer can absorb.
struct OrderError : Error {
  using Error::Error;
};

/// An event coincides with the ring center, or a calculated detuning is
/// non-positive; radial quantities are undefined there.
struct DegenerateGeometry : Error {
  using Error::Error;
};

struct FitError : Error {
  using Error::Error;
};

struct IntegrationError : Error {
  using Error::Error;
};

}  // namespace spdc
