#pragma once

#include <stdexcept>
#include <string>

namespace topokd {

/// Base of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A precondition on an argument was violated (non-finite input, empty series, bad range).
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// Tensor or layer shapes do not chain.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// A file could not be parsed or does not match the expected layout.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Wraps an error with the pipeline stage that raised it.
class StageError : public Error {
 public:
  StageError(std::string stage, const std::string& what)
      : Error("[" + stage + "] " + what), stage_(std::move(stage)) {}

  const std::string& stage() const noexcept { return stage_; }

 private:
  std::string stage_;
};

}  // namespace topokd
