#pragma once

#include <stdexcept>
#include <string>

namespace scorefilter {

// All library failures derive from Error so callers (the CLI in particular)
// can report a single-line diagnostic without knowing the module.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Precondition or invariant violated by caller-supplied data.
class ValidationError : public Error {
 public:
  using Error::Error;
};

// File does not carry the expected magic/version.
class FormatError : public Error {
 public:
  using Error::Error;
};

// File header and payload disagree (truncated or padded file).
class CorruptionError : public Error {
 public:
  using Error::Error;
};

// Filesystem read/write failure.
class StorageError : public Error {
 public:
  using Error::Error;
};

// Malformed text input (JSON Lines, TOML).
class ParseError : public Error {
 public:
  using Error::Error;
};

// Non-finite value produced during a numeric computation.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Statistic is undefined for the given input (e.g. correlation of a constant).
class UndefinedError : public Error {
 public:
  using Error::Error;
};

}  // namespace scorefilter
