#pragma once

#include <stdexcept>
#include <string>

namespace dmavae {

enum class ErrorKind {
  Shape,
  Domain,
  Spec,
  Argument,
  Model,
  Training,
  Io,
  Parse,
  Ingestion,
  Unsupported,
  SingularDesign,
  UndefinedMetric,
  Aggregation,
  Config,
};

const char* to_string(ErrorKind kind) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

inline void require(bool condition, ErrorKind kind, const std::string& message) {
  if (!condition) fail(kind, message);
}

}  // namespace dmavae
