#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace difclue {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Dimension mismatch between operands.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Argument outside the accepted domain (bad range, empty input, unknown class).
class ParameterError : public Error {
 public:
  using Error::Error;
};

// Non-finite value encountered where a finite one is required.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Malformed file: bad magic, version mismatch, checksum failure, truncation.
class FormatError : public Error {
 public:
  using Error::Error;
};

// Failure inside one experiment stage; carries the stage name.
class StageError : public Error {
 public:
  StageError(std::string stage, const std::string& what)
      : Error("[" + stage + "] " + what), stage_(std::move(stage)) {}
  const std::string& stage() const noexcept { return stage_; }

 private:
  std::string stage_;
};

}  // namespace difclue
