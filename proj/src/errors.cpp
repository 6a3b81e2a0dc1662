#include "mvad/errors.hpp"

namespace mvad {

std::string_view error_kind_name(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kDegenerateInput:
      return "DegenerateInput";
    case ErrorKind::kDimensionError:
      return "DimensionError";
    case ErrorKind::kZeroVector:
      return "ZeroVector";
    case ErrorKind::kEmptyInput:
      return "EmptyInput";
    case ErrorKind::kManifestError:
      return "ManifestError";
    case ErrorKind::kFormatError:
      return "FormatError";
    case ErrorKind::kInsufficientData:
      return "InsufficientData";
    case ErrorKind::kConfigError:
      return "ConfigError";
    case ErrorKind::kBatchTooSmall:
      return "BatchTooSmall";
    case ErrorKind::kStaleTrace:
      return "StaleTrace";
    case ErrorKind::kEmptyBank:
      return "EmptyBank";
    case ErrorKind::kModelIncomplete:
      return "ModelIncomplete";
    case ErrorKind::kSingleClass:
      return "SingleClass";
    case ErrorKind::kNumericDivergence:
      return "NumericDivergence";
  }
  return "Unknown";
}

}  // namespace mvad
