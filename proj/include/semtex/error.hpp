#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace semtex {

enum class ErrorCode {
  kInvalidArgument,
  kDimensionTooSmall,
  kChannelMismatch,
  kMagicMismatch,
  kVersionMismatch,
  kTruncated,
  kDimensionOverflow,
  kShapeChain,
  kBehindCamera,
  kInsufficientOverlap,
  kSingularSystem,
  kImageTooSmall,
  kEmptyScores,
  kIo,
};

inline std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "invalid-argument";
    case ErrorCode::kDimensionTooSmall: return "dimension-too-small";
    case ErrorCode::kChannelMismatch: return "channel-mismatch";
    case ErrorCode::kMagicMismatch: return "magic-mismatch";
    case ErrorCode::kVersionMismatch: return "version-mismatch";
    case ErrorCode::kTruncated: return "truncated";
    case ErrorCode::kDimensionOverflow: return "dimension-overflow";
    case ErrorCode::kShapeChain: return "shape-chain";
    case ErrorCode::kBehindCamera: return "behind-camera";
    case ErrorCode::kInsufficientOverlap: return "insufficient-overlap";
    case ErrorCode::kSingularSystem: return "singular-system";
    case ErrorCode::kImageTooSmall: return "image-too-small";
    case ErrorCode::kEmptyScores: return "empty-scores";
    case ErrorCode::kIo: return "io";
  }
  return "unknown";
}

/// Every failure raised by the library carries a machine-readable code.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace semtex
