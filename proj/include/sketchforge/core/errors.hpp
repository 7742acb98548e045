#pragma once

#include <stdexcept>
#include <string>

namespace sf {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Tensor or image dimensions do not match what an operation expects.
class ShapeError : public Error {
public:
  using Error::Error;
};

/// Invalid construction-time configuration (network configs, unknown tap layers).
class ConfigError : public Error {
public:
  using Error::Error;
};

/// Out-of-range numeric parameter for a filter or augmentation.
class ParameterError : public Error {
public:
  using Error::Error;
};

/// Value outside the mathematical domain of an operation (e.g. log of a score <= 0).
class DomainError : public Error {
public:
  using Error::Error;
};

/// Malformed, truncated or incompatible checkpoint / archive.
class CheckpointError : public Error {
public:
  using Error::Error;
};

/// Rejected user data (manifests, stroke sets, requests).
class ValidationError : public Error {
public:
  using Error::Error;
};

/// Filesystem or codec failure.
class IoError : public Error {
public:
  using Error::Error;
};

} // namespace sf
