// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace octsr {

/// Base exception for every recoverable failure raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed or truncated file, wrong magic, unsupported version.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// A precondition on shapes, dims or configuration was violated.
class ShapeError : public Error {
 public:
  using Error::Error;
};

}  // namespace octsr
