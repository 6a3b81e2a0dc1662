#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace mvad {

enum class ErrorKind {
  kDegenerateInput,
  kDimensionError,
  kZeroVector,
  kEmptyInput,
  kManifestError,
  kFormatError,
  kInsufficientData,
  kConfigError,
  kBatchTooSmall,
  kStaleTrace,
  kEmptyBank,
  kModelIncomplete,
  kSingleClass,
  kNumericDivergence,
};

std::string_view error_kind_name(ErrorKind kind);

// Every failure raised by the library carries a kind so callers (the CLI in
// particular) can map it onto an exit code without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(error_kind_name(kind)) + ": " + message),
        kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

// Literal messages are only turned into strings on failure.
inline void require(bool condition, ErrorKind kind, const char* message) {
  if (!condition) fail(kind, message);
}

inline void require(bool condition, ErrorKind kind, const std::string& message) {
  if (!condition) fail(kind, message);
}

}  // namespace mvad
