#pragma once

#include <stdexcept>
#include <string>

namespace entlens {

/// Failure categories. The CLI maps these onto process exit codes.
enum class ErrorKind {
  usage,
  io,
  validation,
  format,
  unsupported_version,
  corruption,
  data,
  domain,
  shape,
  index,
  content,
  config,
  stratification,
  undefined,
  internal,
};

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::usage: return "usage";
    case ErrorKind::io: return "io";
    case ErrorKind::validation: return "validation";
    case ErrorKind::format: return "format";
    case ErrorKind::unsupported_version: return "unsupported-version";
    case ErrorKind::corruption: return "corruption";
    case ErrorKind::data: return "data";
    case ErrorKind::domain: return "domain";
    case ErrorKind::shape: return "shape";
    case ErrorKind::index: return "index";
    case ErrorKind::content: return "content";
    case ErrorKind::config: return "config";
    case ErrorKind::stratification: return "stratification";
    case ErrorKind::undefined: return "undefined";
    case ErrorKind::internal: return "internal";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + " error: " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

inline void require(bool cond, ErrorKind kind, const std::string& what) {
  if (!cond) fail(kind, what);
}

// Literal messages stay unallocated on the hot path.
inline void require(bool cond, ErrorKind kind, const char* what) {
  if (!cond) [[unlikely]] fail(kind, what);
}

}  // namespace entlens
