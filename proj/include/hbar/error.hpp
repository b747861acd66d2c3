#pragma once

#include <stdexcept>
#include <string>

namespace hbar {

enum class ErrorKind {
  Config,
  Structure,
  MismatchedParams,
  OutOfRange,
  Regime,
  OutOfWindow,
  OutOfInterval,
  WindowTooShort,
  JunctionNotFound,
  CflViolation,
  DomainTooSmall,
  InconsistentEvidence,
  NonConvergence,
};

inline const char* to_string(ErrorKind k) {
  switch (k) {
    case ErrorKind::Config: return "ConfigError";
    case ErrorKind::Structure: return "StructureError";
    case ErrorKind::MismatchedParams: return "MismatchedParams";
    case ErrorKind::OutOfRange: return "OutOfRange";
    case ErrorKind::Regime: return "RegimeError";
    case ErrorKind::OutOfWindow: return "OutOfWindow";
    case ErrorKind::OutOfInterval: return "OutOfInterval";
    case ErrorKind::WindowTooShort: return "WindowTooShort";
    case ErrorKind::JunctionNotFound: return "JunctionNotFound";
    case ErrorKind::CflViolation: return "CFLViolation";
    case ErrorKind::DomainTooSmall: return "DomainTooSmall";
    case ErrorKind::InconsistentEvidence: return "InconsistentEvidence";
    case ErrorKind::NonConvergence: return "NonConvergence";
  }
  return "Error";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& msg)
      : std::runtime_error(std::string(to_string(kind)) + ": " + msg), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

// Process exit code used by the CLI.
inline int exit_code(ErrorKind k) {
  switch (k) {
    case ErrorKind::Config:
    case ErrorKind::Structure:
    case ErrorKind::MismatchedParams:
      return 2;
    case ErrorKind::InconsistentEvidence:
      return 4;
    case ErrorKind::NonConvergence:
      return 5;
    default:
      return 3;
  }
}

[[noreturn]] inline void fail(ErrorKind k, const std::string& msg) { throw Error(k, msg); }

}  // namespace hbar
