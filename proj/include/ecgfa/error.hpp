#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace ecgfa {

enum class ErrorCode {
  kInvalidArgument,
  kIntegrationDiverged,
  kInvalidJitter,
  kWindowTooLong,
  kUnsupportedSmoothness,
  kInsufficientReplicates,
  kZeroNoise,
  kNoBeats,
  kFitDiverged,
  kEmptyComponent,
  kLengthMismatch,
  kIoError,
  kParseError,
};

std::string_view to_string(ErrorCode code);

// All library failures are reported as ecgfa::Error; the code is what the CLI
// writes into its machine-readable error document.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  [[nodiscard]] ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

inline void require(bool condition, const std::string& message) {
  if (!condition) fail(ErrorCode::kInvalidArgument, message);
}

}  // namespace ecgfa
