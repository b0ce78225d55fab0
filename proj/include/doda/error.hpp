#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace doda {

enum class ErrorCode {
  kEmptyInput,
  kUnknownLabel,
  kParseError,
  kIoError,
  kDuplicateScene,
  kMissingFile,
  kInvalidArgument,
  kOverlapError,
  kNoFreeSpace,
  kNoWallPoints,
  kDegeneratePose,
  kDegeneratePartition,
  kShapeMismatch,
  kNoSupervision,
  kDimensionError,
  kDivergenceError,
  kNoEvaluatedClasses,
};

std::string_view to_string(ErrorCode code);

// All library failures are reported through this exception; callers branch on code().
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message);

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace doda
