#pragma once

#include <stdexcept>
#include <string>

namespace streetappeal {

/// Base of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad parameters or configuration; maps to CLI exit code 1.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Input data that fails validation; maps to CLI exit code 2.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// A rating backend gave up on an item; maps to CLI exit code 3.
class BackendExhausted : public Error {
 public:
  BackendExhausted(const std::string& what, std::string last_raw_text, int attempts)
      : Error(what), last_raw_text_(std::move(last_raw_text)), attempts_(attempts) {}

  const std::string& last_raw_text() const noexcept { return last_raw_text_; }
  int attempts() const noexcept { return attempts_; }

 private:
  std::string last_raw_text_;
  int attempts_;
};

/// Credentials rejected by a remote service. Never retried.
class AuthError : public Error {
 public:
  using Error::Error;
};

}  // namespace streetappeal
