#pragma once

#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace irbed {

enum class ErrorKind {
  parse,           // malformed input text
  integrity,       // duplicate keys, broken cross-references in data files
  validation,      // a value violates a type invariant
  not_found,
  conflict,        // duplicate ids, re-registration
  denied,          // an operation the caller's role may not perform
  io,
  sandbox,         // a component tried to break out of its sandbox
  execution,       // a component failed to run
  digest_mismatch, // stored content does not match its recorded digest
  withheld,        // content exists only as a digest stub
  unsupported,
};

inline std::string_view error_kind_name(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::parse: return "parse";
    case ErrorKind::integrity: return "integrity";
    case ErrorKind::validation: return "validation";
    case ErrorKind::not_found: return "not_found";
    case ErrorKind::conflict: return "conflict";
    case ErrorKind::denied: return "denied";
    case ErrorKind::io: return "io";
    case ErrorKind::sandbox: return "sandbox";
    case ErrorKind::execution: return "execution";
    case ErrorKind::digest_mismatch: return "digest_mismatch";
    case ErrorKind::withheld: return "withheld";
    case ErrorKind::unsupported: return "unsupported";
  }
  return "?";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, std::string message)
      : std::runtime_error(std::move(message)), kind_(kind) {}

  ErrorKind kind() const { return kind_; }
  std::string_view kind_name() const { return error_kind_name(kind_); }

 private:
  ErrorKind kind_;
};

/// Collects non-fatal warnings emitted while parsing or importing data.
struct Diagnostics {
  std::vector<std::string> warnings;
  void warn(std::string message) { warnings.push_back(std::move(message)); }
};

inline void warn_into(Diagnostics* diag, std::string message) {
  if (diag != nullptr) diag->warn(std::move(message));
}

}  // namespace irbed
