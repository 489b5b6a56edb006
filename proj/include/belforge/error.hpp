#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace belforge {

// Root of the toolkit's exception hierarchy. The CLI maps each subclass to
// an exit code (ConfigError 1, DataError 2, IoError/NetworkError 3).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid configuration values (out-of-range k, bad batch size, ...).
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Malformed input data. `location` is a line number or byte offset when
// one is known, otherwise -1.
class DataError : public Error {
 public:
  explicit DataError(const std::string& what, std::int64_t location = -1)
      : Error(what), location_(location) {}

  std::int64_t location() const noexcept { return location_; }

 private:
  std::int64_t location_;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// Remote endpoint failures. Always retryable from the caller's side.
class NetworkError : public IoError {
 public:
  NetworkError(const std::string& what, int http_status = 0)
      : IoError(what), http_status_(http_status) {}

  int http_status() const noexcept { return http_status_; }
  bool retryable() const noexcept { return true; }

 private:
  int http_status_;
};

}  // namespace belforge
