#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace envid {

enum class ErrorKind {
  kInvalidArgument,
  kRoomTooSmall,
  kInvalidGeometry,
  kDecayTooShort,
  kSampleRateMismatch,
  kSilentNoiseSource,
  kCodecUnavailable,
  kCodecFailure,
  kEmptyProfile,
  kShapeMismatch,
  kGraphNotRecorded,
  kInsufficientClasses,
  kInsufficientSamples,
  kEmptySupport,
  kDimensionMismatch,
  kEmptyPool,
  kSingleClassScores,
  kLengthMismatch,
  kMissingPool,
  kProtocolMismatch,
  kUnreadableFile,
  kEmptyDirectory,
  kConfig,
  kCorruptFile,
};

std::string_view to_string(ErrorKind kind);

// Every failure surfaced by the library carries one of the kinds above so the
// CLI can map it to an exit code.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(to_string(kind)) + ": " + message),
        kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace envid
