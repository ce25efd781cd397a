#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace trimlab {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A precondition on an argument or configuration did not hold.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// Binary or text input is malformed at a known byte position.
class FormatError : public Error {
 public:
  FormatError(const std::string& what, std::size_t offset)
      : Error(what + " (at byte " + std::to_string(offset) + ")"), offset_(offset) {}

  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

/// Input ended before the declared payload was complete.
class TruncatedError : public FormatError {
 public:
  using FormatError::FormatError;
};

/// Stored checksum does not match the payload.
class ChecksumError : public Error {
 public:
  using Error::Error;
};

/// A header token of a PGM/PPM file could not be parsed.
class ParseError : public FormatError {
 public:
  using FormatError::FormatError;
};

/// Filesystem failure (missing file, unwritable path).
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace trimlab
