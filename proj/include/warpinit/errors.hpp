// Copyright Contributors to the warpinit project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace warpinit {

// Failure categories, mapped one-to-one onto CLI exit codes.
enum class ErrorKind {
  invalid_input,  // exit 2: bad arguments, malformed values, broken preconditions
  format,         // exit 2: unparseable or inconsistent file contents
  numeric,        // exit 3: rank-deficient systems, degenerate geometry
  io,             // exit 4: missing or unwritable files
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const { return kind_; }

  int exit_code() const {
    switch (kind_) {
      case ErrorKind::invalid_input:
      case ErrorKind::format:
        return 2;
      case ErrorKind::numeric:
        return 3;
      case ErrorKind::io:
        return 4;
    }
    return 1;
  }

 private:
  ErrorKind kind_;
};

// Thrown when a view cannot contribute enough control pairs for a spline
// fit; the pipeline downgrades this to a per-view skip instead of a job
// failure.
class InsufficientControls : public Error {
 public:
  explicit InsufficientControls(const std::string& what) : Error(ErrorKind::invalid_input, what) {}
};

[[noreturn]] inline void throw_invalid(const std::string& msg) {
  throw Error(ErrorKind::invalid_input, msg);
}

[[noreturn]] inline void throw_format(const std::string& msg) {
  throw Error(ErrorKind::format, msg);
}

[[noreturn]] inline void throw_numeric(const std::string& msg) {
  throw Error(ErrorKind::numeric, msg);
}

[[noreturn]] inline void throw_io(const std::string& msg) {
  throw Error(ErrorKind::io, msg);
}

}  // namespace warpinit
