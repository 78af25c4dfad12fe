#pragma once

#include <stdexcept>
#include <string>

namespace msrnn {

/// Base class for every error raised by the library. The CLI maps each
/// subclass onto a stable process exit code.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input text (CSV rows, JSON configs).
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
  explicit ParseError(const std::string& what) : Error(what) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_ = 0;
};

/// Input that parses but violates a documented invariant.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Not enough observations for the requested operation.
class InsufficientDataError : public Error {
 public:
  using Error::Error;
};

/// Tensor shapes incompatible with a primitive or a model.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Argument outside the mathematical domain of a function.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Non-finite or degenerate numerics.
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// API misuse, e.g. a second backward pass on a consumed tape.
class UsageError : public Error {
 public:
  using Error::Error;
};

/// A stored artifact (checkpoint, config) does not match what is expected.
class ArtifactError : public Error {
 public:
  using Error::Error;
};

/// File system failures.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace msrnn
