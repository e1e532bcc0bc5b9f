// Copyright 2026 The shiftnl Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace shiftnl {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A caller broke an operation's contract (mismatched formats, bad sizes,
/// inputs outside a kernel's precondition).
class ContractError : public Error {
 public:
  using Error::Error;
};

/// Argument outside the mathematical domain of a function (log of zero,
/// square root of a negative number).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Malformed or truncated on-disk container.
class FramingError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration value; `field()` names the offending key.
class ConfigError : public Error {
 public:
  ConfigError(std::string field, const std::string& what)
      : Error(field + ": " + what), field_(std::move(field)) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

}  // namespace shiftnl
