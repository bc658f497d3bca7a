#pragma once

#include <stdexcept>
#include <string>

namespace that {

// Error taxonomy shared across the library. The CLI maps these onto exit
// codes: config/contract -> 2, shape/data -> 3, numeric -> 4.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Mismatched extents, invalid axes, incompatible operand shapes.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Violated preconditions that are not shape-related (non-scalar loss,
// even pooling kernel, ...).
class ContractError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

// Non-finite values, degenerate softmax slices, degenerate references.
class NumericError : public Error {
 public:
  using Error::Error;
};

// File format and I/O problems. Carries a byte offset when one is known.
class DataError : public Error {
 public:
  explicit DataError(const std::string& msg, long long byte_offset = -1)
      : Error(msg), offset_(byte_offset) {}
  long long byte_offset() const { return offset_; }

 private:
  long long offset_;
};

}  // namespace that
