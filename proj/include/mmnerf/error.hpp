// Copyright 2026 The mmnerf Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace mmnerf {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// File missing, unreadable or unwritable.
class IoError : public Error {
 public:
  using Error::Error;
};

/// Malformed file content: bad magic, version mismatch, truncation, non-finite pixels.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Sizes that should agree do not.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Argument outside the operation's domain.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Geometric or numerical degeneracy (rank-deficient system, singular matrix).
class DegenerateError : public Error {
 public:
  using Error::Error;
};

/// Training diverged: a non-finite loss or gradient was produced.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace mmnerf
