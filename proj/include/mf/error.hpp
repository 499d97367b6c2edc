#pragma once

#include <stdexcept>
#include <string>

namespace mf {

enum class ErrorCode {
  InvalidArgument,
  ZeroLengthSegment,
  NonFiniteInput,
  ContextMismatch,
  RecordingTooShort,
  WindowTooShort,
  LengthMismatch,
  ShapeMismatch,
  NonFiniteGradient,
  NonFiniteLoss,
  IoError,
  ParseError,
  VersionMismatch,
  DegenerateVariance,
  DegenerateData,
  GroupTooSmall,
  TargetUnreachable,
};

const char* to_string(ErrorCode code) noexcept;

// Every failure raised by the library carries one of the codes above so that
// callers (and the CLI exit-code mapping) can dispatch without string matching.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what);
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace mf
