#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace vibhead {

enum class ErrorCode {
  NoBurstFound,
  RecordingTooShort,
  SegmentTooShort,
  EmptyInput,
  InputTooShort,
  BadRange,
  ShapeMismatch,
  DegenerateBatch,
  KernelTooLarge,
  LabelOutOfRange,
  EmptyClass,
  StratumTooSmall,
  TooFewUsers,
  UnknownCandidate,
  InsufficientUsers,
  InvalidArgument,
  ParseError,
  IoError,
  ChecksumMismatch,
};

constexpr std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::NoBurstFound: return "NoBurstFound";
    case ErrorCode::RecordingTooShort: return "RecordingTooShort";
    case ErrorCode::SegmentTooShort: return "SegmentTooShort";
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::InputTooShort: return "InputTooShort";
    case ErrorCode::BadRange: return "BadRange";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::DegenerateBatch: return "DegenerateBatch";
    case ErrorCode::KernelTooLarge: return "KernelTooLarge";
    case ErrorCode::LabelOutOfRange: return "LabelOutOfRange";
    case ErrorCode::EmptyClass: return "EmptyClass";
    case ErrorCode::StratumTooSmall: return "StratumTooSmall";
    case ErrorCode::TooFewUsers: return "TooFewUsers";
    case ErrorCode::UnknownCandidate: return "UnknownCandidate";
    case ErrorCode::InsufficientUsers: return "InsufficientUsers";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::ChecksumMismatch: return "ChecksumMismatch";
  }
  return "Unknown";
}

/// Every failure in the library surfaces as this exception; `code()` lets
/// callers (and tests) branch on the failure kind without parsing text.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) {
  throw Error(code, what);
}

}  // namespace vibhead
