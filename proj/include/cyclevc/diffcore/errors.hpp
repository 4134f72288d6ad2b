// SPDX-FileCopyrightText: Copyright (c) 2026 The cyclevc Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace cyclevc {

// Base of every error raised by the toolkit.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

// Argument outside the mathematical domain of an operation (log of x <= 0, c <= 0, ...).
class DomainError : public Error {
 public:
  using Error::Error;
};

// A forward value or gradient became NaN or infinite.
class NumericError : public Error {
 public:
  using Error::Error;
};

class TapeError : public Error {
 public:
  using Error::Error;
};

class FormatError : public Error {
 public:
  using Error::Error;
};

// A file could not be opened, read or written.
class IoError : public Error {
 public:
  using Error::Error;
};

class ChecksumError : public FormatError {
 public:
  using FormatError::FormatError;
};

class VariantMismatchError : public Error {
 public:
  using Error::Error;
};

class UnknownSpeakerError : public Error {
 public:
  using Error::Error;
};

class MissingCriticError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace cyclevc
