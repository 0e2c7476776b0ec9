#pragma once

#include <stdexcept>
#include <string>

namespace evcs {

// Base for every failure raised by the library. The CLI maps subclasses onto
// exit codes, so new error kinds should derive from the closest category.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Numeric failures (exit code 2).
class NumericError : public Error {
 public:
  using Error::Error;
};

class NoConvergence : public NumericError {
 public:
  using NumericError::NumericError;
};

class NumericBlowup : public NumericError {
 public:
  using NumericError::NumericError;
};

class RankDeficient : public NumericError {
 public:
  using NumericError::NumericError;
};

class Diverged : public NumericError {
 public:
  using NumericError::NumericError;
};

// Invalid arguments or inputs (exit code 1 at the CLI).
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

class DutyOutOfRange : public InvalidArgument {
 public:
  using InvalidArgument::InvalidArgument;
};

class InvalidSizing : public InvalidArgument {
 public:
  using InvalidArgument::InvalidArgument;
};

class WindowOutOfRange : public InvalidArgument {
 public:
  using InvalidArgument::InvalidArgument;
};

class TooShort : public InvalidArgument {
 public:
  using InvalidArgument::InvalidArgument;
};

class SchemaMismatch : public InvalidArgument {
 public:
  using InvalidArgument::InvalidArgument;
};

class CorruptCheckpoint : public InvalidArgument {
 public:
  using InvalidArgument::InvalidArgument;
};

class ConfigError : public InvalidArgument {
 public:
  using InvalidArgument::InvalidArgument;
};

}  // namespace evcs
