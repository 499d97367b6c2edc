#include "mf/error.hpp"

namespace mf {

const char* to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::ZeroLengthSegment: return "ZeroLengthSegment";
    case ErrorCode::NonFiniteInput: return "NonFiniteInput";
    case ErrorCode::ContextMismatch: return "ContextMismatch";
    case ErrorCode::RecordingTooShort: return "RecordingTooShort";
    case ErrorCode::WindowTooShort: return "WindowTooShort";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::NonFiniteGradient: return "NonFiniteGradient";
    case ErrorCode::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::VersionMismatch: return "VersionMismatch";
    case ErrorCode::DegenerateVariance: return "DegenerateVariance";
    case ErrorCode::DegenerateData: return "DegenerateData";
    case ErrorCode::GroupTooSmall: return "GroupTooSmall";
    case ErrorCode::TargetUnreachable: return "TargetUnreachable";
  }
  return "Unknown";
}

Error::Error(ErrorCode code, const std::string& what)
    : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

}  // namespace mf
