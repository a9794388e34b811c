#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace cbr {

// Base for every error the library raises. `retryable()` marks transient
// backend failures that a caller may retry with backoff.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  virtual bool retryable() const noexcept { return false; }
};

// case bank
class EmbeddingDimensionMismatch : public Error {
 public:
  using Error::Error;
};
class StorageFailure : public Error {
 public:
  using Error::Error;
};
class UnknownCaseId : public Error {
 public:
  using Error::Error;
};
class DuplicateCaseId : public Error {
 public:
  using Error::Error;
};
class InvalidCase : public Error {
 public:
  using Error::Error;
};

class MalformedRecord : public Error {
 public:
  MalformedRecord(std::size_t line, const std::string& what)
      : Error("malformed record at line " + std::to_string(line) + ": " + what),
        line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

// retrieval
class DimensionMismatch : public Error {
 public:
  using Error::Error;
};
class ZeroVector : public Error {
 public:
  using Error::Error;
};
class EmbeddingServiceUnavailable : public Error {
 public:
  using Error::Error;
  bool retryable() const noexcept override { return true; }
};
class DimensionChanged : public Error {
 public:
  using Error::Error;
};

// reuse
class LlmServiceUnavailable : public Error {
 public:
  using Error::Error;
  bool retryable() const noexcept override { return true; }
};
class ContextOverflow : public Error {
 public:
  using Error::Error;
};

// training
class BankTooSmall : public Error {
 public:
  using Error::Error;
};
class MissingEmbedding : public Error {
 public:
  using Error::Error;
};
class NonFiniteLoss : public Error {
 public:
  using Error::Error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

// service
class SessionNotFound : public Error {
 public:
  using Error::Error;
};
class InvalidTransition : public Error {
 public:
  using Error::Error;
};
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace cbr
