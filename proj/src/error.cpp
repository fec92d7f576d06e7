#include "envid/error.hpp"

namespace envid {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kInvalidArgument: return "InvalidArgument";
    case ErrorKind::kRoomTooSmall: return "RoomTooSmall";
    case ErrorKind::kInvalidGeometry: return "InvalidGeometry";
    case ErrorKind::kDecayTooShort: return "DecayTooShort";
    case ErrorKind::kSampleRateMismatch: return "SampleRateMismatch";
    case ErrorKind::kSilentNoiseSource: return "SilentNoiseSource";
    case ErrorKind::kCodecUnavailable: return "CodecUnavailable";
    case ErrorKind::kCodecFailure: return "CodecFailure";
    case ErrorKind::kEmptyProfile: return "EmptyProfile";
    case ErrorKind::kShapeMismatch: return "ShapeMismatch";
    case ErrorKind::kGraphNotRecorded: return "GraphNotRecorded";
    case ErrorKind::kInsufficientClasses: return "InsufficientClasses";
    case ErrorKind::kInsufficientSamples: return "InsufficientSamples";
    case ErrorKind::kEmptySupport: return "EmptySupport";
    case ErrorKind::kDimensionMismatch: return "DimensionMismatch";
    case ErrorKind::kEmptyPool: return "EmptyPool";
    case ErrorKind::kSingleClassScores: return "SingleClassScores";
    case ErrorKind::kLengthMismatch: return "LengthMismatch";
    case ErrorKind::kMissingPool: return "MissingPool";
    case ErrorKind::kProtocolMismatch: return "ProtocolMismatch";
    case ErrorKind::kUnreadableFile: return "UnreadableFile";
    case ErrorKind::kEmptyDirectory: return "EmptyDirectory";
    case ErrorKind::kConfig: return "ConfigError";
    case ErrorKind::kCorruptFile: return "CorruptFile";
  }
  return "Unknown";
}

}  // namespace envid
