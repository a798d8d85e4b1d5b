#pragma once

#include <stdexcept>
#include <string>

namespace amaml {

/// Base class for every error thrown by this library.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

/// Violated precondition, dimension mismatch, or invalid argument.
class ContractError : public Error {
 public:
  using Error::Error;
};

/// Bad experiment or solver configuration, rejected before any compute.
class ConfigError : public ContractError {
 public:
  using ContractError::ContractError;
};

/// Non-finite value or diverging iteration in a numerical routine.
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// Malformed input file; the message carries the 1-based line number.
class ParseError : public Error {
 public:
  using Error::Error;
};

/// Structurally valid data that cannot support the requested operation.
class DataError : public Error {
 public:
  using Error::Error;
};

}  // namespace amaml
