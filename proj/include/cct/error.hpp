#pragma once

#include <stdexcept>
#include <string>

namespace cct {

// Exit-code classes shared by the C API and the CLI.
enum class ErrorKind : int {
  config = 1,
  io = 2,
  contract = 3,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

/// Violated precondition of a public operation.
class ContractError : public Error {
 public:
  explicit ContractError(const std::string& what) : Error(ErrorKind::contract, what) {}
};

/// Tensor shape mismatch. The message names both shapes.
class DimensionError : public ContractError {
 public:
  using ContractError::ContractError;
};

/// Invalid configuration; the message names the offending key.
class ConfigError : public Error {
 public:
  ConfigError(std::string key, const std::string& what)
      : Error(ErrorKind::config, key.empty() ? what : key + ": " + what), key_(std::move(key)) {}
  const std::string& key() const noexcept { return key_; }

 private:
  std::string key_;
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error(ErrorKind::io, what) {}
};

/// Malformed input file (IDX, CSV, checkpoint).
class ParseError : public IoError {
 public:
  using IoError::IoError;
};

}  // namespace cct
