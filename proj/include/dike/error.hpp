#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace dike {

// Error categories shared by every module. The numeric values are mirrored by
// dike_status in dike.h, so append only.
enum class ErrorCode {
  kInvalidArgument = 1,
  kUnknownLabel,
  kNonFiniteValue,
  kEmptyInput,
  kLengthMismatch,
  kZeroVector,
  kUncoveredLevel,
  kLevelOutOfRange,
  kMissingFixture,
  kCassetteCorrupt,
  kBackendUnavailable,
  kRefusal,
  kCritUnavailable,
  kParseError,
  kSchemaMismatch,
  kStorageUnavailable,
  kMissingSource,
  kNotFound,
  kConflict,
  kNotReady,
  kConfig,
  kInternal,
};

std::string_view to_string(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message, std::string field = {})
      : std::runtime_error(message), code_(code), field_(std::move(field)) {}

  ErrorCode code() const noexcept { return code_; }
  // JSON-path style location of the offending input, empty when not applicable.
  const std::string& field() const noexcept { return field_; }

 private:
  ErrorCode code_;
  std::string field_;
};

}  // namespace dike
