#include "ecgfa/error.hpp"

namespace ecgfa {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "invalid-argument";
    case ErrorCode::kIntegrationDiverged: return "integration-diverged";
    case ErrorCode::kInvalidJitter: return "invalid-jitter";
    case ErrorCode::kWindowTooLong: return "window-too-long";
    case ErrorCode::kUnsupportedSmoothness: return "unsupported-smoothness";
    case ErrorCode::kInsufficientReplicates: return "insufficient-replicates";
    case ErrorCode::kZeroNoise: return "zero-noise";
    case ErrorCode::kNoBeats: return "no-beats";
    case ErrorCode::kFitDiverged: return "fit-diverged";
    case ErrorCode::kEmptyComponent: return "empty-component";
    case ErrorCode::kLengthMismatch: return "length-mismatch";
    case ErrorCode::kIoError: return "io-error";
    case ErrorCode::kParseError: return "parse-error";
  }
  return "unknown";
}

}  // namespace ecgfa
