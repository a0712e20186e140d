#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace csp {

enum class ErrorCode {
  kEmptySketch,
  kEmptyInput,
  kDegenerateSketch,
  kFileNotFound,
  kFormatError,
  kEmptyCorpus,
  kDimensionMismatch,
  kUnknownSketchRef,
  kTooFewPoints,
  kUnknownCategory,
  kMissingToken,
  kInsufficientCandidates,
  kEmptyBucket,
  kCorruptIndex,
  kExtractorMismatch,
};

constexpr std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::kEmptySketch: return "EmptySketch";
    case ErrorCode::kEmptyInput: return "EmptyInput";
    case ErrorCode::kDegenerateSketch: return "DegenerateSketch";
    case ErrorCode::kFileNotFound: return "FileNotFound";
    case ErrorCode::kFormatError: return "FormatError";
    case ErrorCode::kEmptyCorpus: return "EmptyCorpus";
    case ErrorCode::kDimensionMismatch: return "DimensionMismatch";
    case ErrorCode::kUnknownSketchRef: return "UnknownSketchRef";
    case ErrorCode::kTooFewPoints: return "TooFewPoints";
    case ErrorCode::kUnknownCategory: return "UnknownCategory";
    case ErrorCode::kMissingToken: return "MissingToken";
    case ErrorCode::kInsufficientCandidates: return "InsufficientCandidates";
    case ErrorCode::kEmptyBucket: return "EmptyBucket";
    case ErrorCode::kCorruptIndex: return "CorruptIndex";
    case ErrorCode::kExtractorMismatch: return "ExtractorMismatch";
  }
  return "Unknown";
}

// Every failure raised by the library carries a machine-readable code; what()
// is "<Code>: <detail>" so a single line is greppable by scripts.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& detail)
      : std::runtime_error(std::string(to_string(code)) + ": " + detail),
        code_(code),
        detail_(detail) {}

  ErrorCode code() const noexcept { return code_; }
  const std::string& detail() const noexcept { return detail_; }

 private:
  ErrorCode code_;
  std::string detail_;
};

}  // namespace csp
