#pragma once

#include <stdexcept>
#include <string>

namespace dgclr {

// Base of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Argument outside the mathematical domain of an operation (tau <= 0, p > 1, ...).
class DomainError : public Error {
 public:
  using Error::Error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

// Malformed input file or record.
class ParseError : public Error {
 public:
  using Error::Error;
};

// NaN or Inf where a finite value is required.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Checkpoint or configuration mismatch.
class FormatError : public Error {
 public:
  using Error::Error;
};

}  // namespace dgclr
