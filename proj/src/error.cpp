#include "dike/error.hpp"

namespace dike {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
    case ErrorCode::kUnknownLabel: return "UnknownLabel";
    case ErrorCode::kNonFiniteValue: return "NonFiniteValue";
    case ErrorCode::kEmptyInput: return "EmptyInput";
    case ErrorCode::kLengthMismatch: return "LengthMismatch";
    case ErrorCode::kZeroVector: return "ZeroVector";
    case ErrorCode::kUncoveredLevel: return "UncoveredLevel";
    case ErrorCode::kLevelOutOfRange: return "LevelOutOfRange";
    case ErrorCode::kMissingFixture: return "MissingFixture";
    case ErrorCode::kCassetteCorrupt: return "CassetteCorrupt";
    case ErrorCode::kBackendUnavailable: return "BackendUnavailable";
    case ErrorCode::kRefusal: return "Refusal";
    case ErrorCode::kCritUnavailable: return "CritUnavailable";
    case ErrorCode::kParseError: return "ParseError";
    case ErrorCode::kSchemaMismatch: return "SchemaMismatch";
    case ErrorCode::kStorageUnavailable: return "StorageUnavailable";
    case ErrorCode::kMissingSource: return "MissingSource";
    case ErrorCode::kNotFound: return "NotFound";
    case ErrorCode::kConflict: return "Conflict";
    case ErrorCode::kNotReady: return "NotReady";
    case ErrorCode::kConfig: return "ConfigError";
    case ErrorCode::kInternal: return "Internal";
  }
  return "Unknown";
}

}  // namespace dike
