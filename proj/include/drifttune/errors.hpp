// SPDX-License-Identifier: Apache-2.0

#ifndef DRIFTTUNE_ERRORS_HPP
#define DRIFTTUNE_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace drifttune {

/// Base class for all drifttune errors.
class Error : public std::runtime_error {
public:
  explicit Error(const std::string &msg) : std::runtime_error(msg) {}
};

/// Malformed input file (bad JSON line, ragged vectors, missing tensor, ...).
class FormatError : public Error {
public:
  using Error::Error;
};

/// File system failure (unwritable path, truncated read, ...).
class IoError : public Error {
public:
  using Error::Error;
};

/// Dataset cannot be split as requested.
class SplitError : public Error {
public:
  using Error::Error;
};

/// Invalid configuration value or combination.
class ConfigError : public Error {
public:
  using Error::Error;
};

/// Vector norm too small to normalize.
class DegenerateVectorError : public Error {
public:
  using Error::Error;
};

/// Operands have incompatible shapes.
class DimensionError : public Error {
public:
  using Error::Error;
};

/// SLERP endpoints are (nearly) antipodal; the interpolation plane is undefined.
class AntipodalError : public Error {
public:
  using Error::Error;
};

/// Cached activations do not match the current weights.
class StateError : public Error {
public:
  using Error::Error;
};

/// Class index out of range.
class LabelError : public Error {
public:
  using Error::Error;
};

/// Metric requested on an empty confusion matrix.
class EmptyError : public Error {
public:
  using Error::Error;
};

/// Training produced a non-finite loss.
class DivergenceError : public Error {
public:
  DivergenceError(const std::string &msg, int epoch, long step)
      : Error(msg), epoch(epoch), step(step) {}
  int epoch;
  long step;
};

} // namespace drifttune

#endif
