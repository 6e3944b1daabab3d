#pragma once

#include <stdexcept>
#include <string>

namespace hoplock {

/// Base class for all errors raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid configuration: bad parameter values, inconsistent setup,
/// time step too coarse for the scheduled frequencies. CLI exit code 1.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Scenario / CSV parse failure. Carries a file:line style message. Exit code 1.
class ParseError : public Error {
 public:
  using Error::Error;
};

/// Numerical failure during integration or analysis (non-finite state,
/// degenerate signal). Exit code 2.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// A requested frequency lies outside the achievable compensation band.
/// The message names the achievable band.
class OutOfBandError : public ConfigError {
 public:
  OutOfBandError(const std::string& msg, double f_low, double f_high)
      : ConfigError(msg), f_low(f_low), f_high(f_high) {}
  double f_low;
  double f_high;
};

/// Duty-cycle calibration did not converge within the iteration budget.
class CalibrationError : public NumericError {
 public:
  using NumericError::NumericError;
};

}  // namespace hoplock
