#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace texsyn {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor extents do not agree with what an operation requires.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// A crop or shift left no overlapping elements.
class EmptyOverlap : public ShapeError {
 public:
  using ShapeError::ShapeError;
};

/// A file does not have the expected layout (magic, version, encoding).
class FormatError : public Error {
 public:
  using Error::Error;
};

/// A file parsed but declares an inconsistent network.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Read or write failure, including truncated payloads.
class IoError : public Error {
 public:
  using Error::Error;
};

/// Invalid user configuration (objective, job, mask, schedule).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// The objective produced a non-finite loss or gradient.
class NumericalError : public Error {
 public:
  NumericalError(const std::string& what, std::size_t iteration)
      : Error(what + " (iteration " + std::to_string(iteration) + ")"),
        iteration_(iteration) {}

  std::size_t iteration() const noexcept { return iteration_; }

 private:
  std::size_t iteration_;
};

}  // namespace texsyn
