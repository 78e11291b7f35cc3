#pragma once

#include <stdexcept>
#include <string>

namespace dctgen {

// Every error raised by the library derives from Error. The subclasses map
// onto the CLI exit codes (2 bad input, 3 malformed file, 4 numeric failure).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  virtual int exit_code() const noexcept { return 2; }
};

// Invalid arguments, unsupported parameters, unreadable inputs.
class InputError : public Error {
 public:
  using Error::Error;
  int exit_code() const noexcept override { return 2; }
};

// Structurally invalid data: bad SDCT files, invariant-violating sequences.
class FormatError : public Error {
 public:
  using Error::Error;
  int exit_code() const noexcept override { return 3; }
};

// Non-finite losses or parameters.
class NumericError : public Error {
 public:
  using Error::Error;
  int exit_code() const noexcept override { return 4; }
};

}  // namespace dctgen
