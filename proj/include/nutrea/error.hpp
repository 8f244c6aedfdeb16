#pragma once

#include <stdexcept>
#include <string>

namespace nutrea {

/// Base of every exception thrown by the library. The C API maps the kind
/// onto its status codes.
class Error : public std::runtime_error {
 public:
  enum class Kind { usage, dimension, contract, validation, data, io, divergence };

  Error(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

class DimensionError : public Error {
 public:
  explicit DimensionError(const std::string& what) : Error(Kind::dimension, what) {}
};

class ContractError : public Error {
 public:
  explicit ContractError(const std::string& what) : Error(Kind::contract, what) {}
};

class ValidationError : public Error {
 public:
  explicit ValidationError(const std::string& what) : Error(Kind::validation, what) {}
};

class DataError : public Error {
 public:
  explicit DataError(const std::string& what) : Error(Kind::data, what) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error(Kind::io, what) {}
};

class UsageError : public Error {
 public:
  explicit UsageError(const std::string& what) : Error(Kind::usage, what) {}
};

}  // namespace nutrea
