// Copyright vulnforge contributors.
// Licensed under the Apache License, Version 2.0, see LICENSE for details.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace vulnforge {

// Broad failure categories. The CLI maps each one to a distinct exit code.
enum class ErrorKind { config, io, backend, validation };

const char *to_string(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string &what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

inline Error config_error(const std::string &what) {
  return Error(ErrorKind::config, what);
}
inline Error io_error(const std::string &what) {
  return Error(ErrorKind::io, what);
}
inline Error validation_error(const std::string &what) {
  return Error(ErrorKind::validation, what);
}

// Raised when held-out evaluation is asked to score a row outside the test
// split.
class LeakageError : public Error {
 public:
  explicit LeakageError(const std::string &what)
      : Error(ErrorKind::validation, what) {}
};

}  // namespace vulnforge
