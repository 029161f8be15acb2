#pragma once

#include <stdexcept>
#include <string>

namespace se {

/// A caller broke an operation's precondition (bad argument, empty input, ...).
class ContractError : public std::logic_error {
 public:
  explicit ContractError(const std::string& what) : std::logic_error(what) {}
};

/// Operand shapes are incompatible.
class DimensionError : public ContractError {
 public:
  explicit DimensionError(const std::string& what) : ContractError(what) {}
};

/// A computation produced NaN/Inf or hit a singular matrix.
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

/// File or data problems (unreadable WAV, malformed checkpoint, ...).
class DataError : public std::runtime_error {
 public:
  explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace se
