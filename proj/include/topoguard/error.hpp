#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace topoguard {

enum class ErrorCode {
  kEmptyNodeSet,
  kShapeMismatch,
  kMalformedLine,
  kInconsistentFeatureWidth,
  kDimensionMismatch,
  kNonSymmetricInput,
  kBadMagic,
  kVersionMismatch,
  kTruncatedFile,
  kBudgetExceedsPairs,
  kShadowTooSmall,
  kRefinementExhaustsCandidates,
  kInsufficientPairs,
  kNonFinite,
  kNoCandidate,
  kZeroBaseline,
  kUnknownAxis,
  kInvalidConfig,
  kInvalidGraph,
  kIo,
};

inline std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kEmptyNodeSet: return "EmptyNodeSet";
    case ErrorCode::kShapeMismatch: return "ShapeMismatch";
    case ErrorCode::kMalformedLine: return "MalformedLine";
    case ErrorCode::kInconsistentFeatureWidth: return "InconsistentFeatureWidth";
    case ErrorCode::kDimensionMismatch: return "DimensionMismatch";
    case ErrorCode::kNonSymmetricInput: return "NonSymmetricInput";
    case ErrorCode::kBadMagic: return "BadMagic";
    case ErrorCode::kVersionMismatch: return "VersionMismatch";
    case ErrorCode::kTruncatedFile: return "TruncatedFile";
    case ErrorCode::kBudgetExceedsPairs: return "BudgetExceedsPairs";
    case ErrorCode::kShadowTooSmall: return "ShadowTooSmall";
    case ErrorCode::kRefinementExhaustsCandidates: return "RefinementExhaustsCandidates";
    case ErrorCode::kInsufficientPairs: return "InsufficientPairs";
    case ErrorCode::kNonFinite: return "NonFinite";
    case ErrorCode::kNoCandidate: return "NoCandidate";
    case ErrorCode::kZeroBaseline: return "ZeroBaseline";
    case ErrorCode::kUnknownAxis: return "UnknownAxis";
    case ErrorCode::kInvalidConfig: return "InvalidConfig";
    case ErrorCode::kInvalidGraph: return "InvalidGraph";
    case ErrorCode::kIo: return "Io";
  }
  return "Unknown";
}

// Every failure raised by the library carries a machine-checkable code.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) { throw Error(code, what); }

}  // namespace topoguard
