#pragma once

#include <stdexcept>
#include <string>

namespace lfp {

/// Base class of every error raised by the toolkit. Each subclass maps to a
/// stable process exit code (see exit_code()).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  virtual int exit_code() const { return 1; }
};

/// Operands whose shapes disagree.
class DimensionError : public Error {
 public:
  using Error::Error;
  int exit_code() const override { return 4; }
};

/// Patch, tile or feature geometry that cannot be realised.
class GeometryError : public Error {
 public:
  using Error::Error;
  int exit_code() const override { return 4; }
};

/// An argument outside its documented domain (kernel sizes, grid sizes, ...).
class ParameterError : public Error {
 public:
  using Error::Error;
  int exit_code() const override { return 3; }
};

/// Invalid configuration: unknown key, type mismatch, violated invariant.
class ConfigError : public Error {
 public:
  using Error::Error;
  int exit_code() const override { return 3; }
};

/// Input data that is malformed or unusable (bad trimap codes, empty sets).
class DataError : public Error {
 public:
  using Error::Error;
  int exit_code() const override { return 6; }
};

/// File system and codec failures.
class IoError : public Error {
 public:
  using Error::Error;
  int exit_code() const override { return 5; }
};

/// A tile could not be evaluated even after bisection.
class ResourceError : public Error {
 public:
  using Error::Error;
  int exit_code() const override { return 8; }
};

}  // namespace lfp
