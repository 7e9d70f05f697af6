#pragma once

#include <stdexcept>
#include <string>

namespace hardylab {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid inputs to a constructor or operation (bad mesh bounds, p <= 1, ...).
class ConstructionError : public Error {
 public:
  using Error::Error;
};

/// A nonlinear solve or iteration did not reach its tolerance.
class ConvergenceError : public Error {
 public:
  using Error::Error;
};

/// Raised when the Green-potential exhaustion grows without bound or the
/// operator shows a non-positive principal eigenvalue.
class CriticalitySuspected : public Error {
 public:
  using Error::Error;
};

/// Scenario configuration problems; carries the full list of messages.
class ConfigError : public Error {
 public:
  using Error::Error;
};

namespace detail {

inline void require(bool ok, const std::string& what) {
  if (!ok) throw ConstructionError(what);
}

}  // namespace detail
}  // namespace hardylab
