#pragma once

#include <stdexcept>
#include <string>

namespace biomstat {

// Broad failure categories. The CLI maps these onto exit codes, so every
// error raised by the library carries one.
enum class ErrorKind {
  kValidation,        // value violates a domain invariant
  kFormat,            // unreadable bytes: magic, version, truncation
  kSchema,            // JSON document with wrong shape or field values
  kIo,                // file system failure
  kInvalidArgument,   // caller passed a bad parameter
  kInsufficientData,  // too few frames or pairs for the statistics
  kDegenerateLabels,  // training or evaluation set has a single class
  kLeakage,           // identity shared between train and evaluation
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

  // Degenerate-data failures are reported with exit code 2.
  bool is_degenerate_data() const noexcept {
    return kind_ == ErrorKind::kInsufficientData ||
           kind_ == ErrorKind::kDegenerateLabels;
  }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kValidation: return "validation error";
    case ErrorKind::kFormat: return "format error";
    case ErrorKind::kSchema: return "schema error";
    case ErrorKind::kIo: return "I/O error";
    case ErrorKind::kInvalidArgument: return "invalid argument";
    case ErrorKind::kInsufficientData: return "insufficient data";
    case ErrorKind::kDegenerateLabels: return "degenerate labels";
    case ErrorKind::kLeakage: return "identity leakage";
  }
  return "error";
}

}  // namespace biomstat
