#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace foley {

/// Root of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// Raised by tensor ops and model layers when operand shapes disagree.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// A NaN or Inf appeared in a tensor op output.
class NumericFault : public Error {
 public:
  using Error::Error;
};

/// Malformed binary or text input. `offset()` is the byte offset (or line
/// number for line-oriented formats) at which decoding stopped.
class CodecError : public Error {
 public:
  CodecError(const std::string& what, std::uint64_t offset)
      : Error(what + " (at offset " + std::to_string(offset) + ")"), offset_(offset) {}
  std::uint64_t offset() const noexcept { return offset_; }

 private:
  std::uint64_t offset_;
};

class IngestError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class BankError : public Error {
 public:
  using Error::Error;
};

class AlignmentError : public Error {
 public:
  using Error::Error;
};

class SplitError : public Error {
 public:
  using Error::Error;
};

class UndefinedCorrelation : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace foley
