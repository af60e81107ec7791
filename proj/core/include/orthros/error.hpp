#ifndef ORTHROS_ERROR_HPP
#define ORTHROS_ERROR_HPP

#include <stdexcept>
#include <string>

namespace orthros {

// Base class for everything the toolkit throws on purpose.
struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Tensor/axis disagreements; message always names both shapes.
struct ShapeError : Error {
  using Error::Error;
};

// Invalid configuration values or a head used while disabled.
struct ConfigError : Error {
  using Error::Error;
};

// Caller broke a precondition (empty input, step 0, missing bos, ...).
struct UsageError : Error {
  using Error::Error;
};

// Malformed file contents; message carries the line number when known.
struct ParseError : Error {
  using Error::Error;
};

// Non-finite values where finite ones are required.
struct NumericError : Error {
  using Error::Error;
};

// CTC target that no alignment of the given input length can produce.
struct InfeasibleAlignmentError : Error {
  using Error::Error;
};

}  // namespace orthros

#endif
