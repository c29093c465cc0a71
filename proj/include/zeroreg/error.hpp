#pragma once

#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>

namespace zeroreg {

enum class ErrorKind {
  kInvalidArgument,
  kParse,
  kConfig,
  kIo,
  kInsufficientData,
  kDegenerate,
  kNoHypothesis,
  kInsufficientStructure,
  kRegistrationFailure,
};

inline std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kInvalidArgument: return "invalid-argument";
    case ErrorKind::kParse: return "parse-error";
    case ErrorKind::kConfig: return "config-error";
    case ErrorKind::kIo: return "io-error";
    case ErrorKind::kInsufficientData: return "insufficient-data";
    case ErrorKind::kDegenerate: return "degenerate";
    case ErrorKind::kNoHypothesis: return "no-hypothesis";
    case ErrorKind::kInsufficientStructure: return "insufficient-structure";
    case ErrorKind::kRegistrationFailure: return "registration-failure";
  }
  return "unknown";
}

/// Single exception type for the library; `kind()` lets callers branch without
/// parsing messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

/// Raised by the registration entry points. `stage()` names the pipeline step
/// that could not continue and `cause()` the underlying error kind.
class RegistrationFailure : public Error {
 public:
  RegistrationFailure(std::string stage, ErrorKind cause, const std::string& message)
      : Error(ErrorKind::kRegistrationFailure, stage + ": " + message),
        stage_(std::move(stage)),
        cause_(cause) {}

  const std::string& stage() const noexcept { return stage_; }
  ErrorKind cause() const noexcept { return cause_; }

 private:
  std::string stage_;
  ErrorKind cause_;
};

}  // namespace zeroreg
