#pragma once

#include <stdexcept>
#include <string>

namespace impz {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Incompatible extents, mismatched operands.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// NaN/Inf, divergence, failed gradient checks.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Bad magic, truncated payloads, malformed headers.
class FormatError : public Error {
 public:
  using Error::Error;
};

// Invalid arguments or configuration, file access.
class UsageError : public Error {
 public:
  using Error::Error;
};

}  // namespace impz
