#pragma once

#include <stdexcept>
#include <string>

namespace qcurv {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid input, configuration or violated precondition (CLI exit code 2).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A node-dependent operation was requested on a spectral-only model.
class SpectralOnlyError : public ConfigError {
 public:
  explicit SpectralOnlyError(const std::string& what)
      : ConfigError("spectral-only model: " + what) {}
};

/// A mathematical hypothesis of the requested operation does not hold.
class PreconditionError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

/// Numerical failure: non-convergence, singular linearization (CLI exit code 3).
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace qcurv
