#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace geolearn {

enum class ErrorCode {
  NonConvergence,
  NotSymmetric,
  NotPositiveDefinite,
  DomainError,
  DimensionMismatch,
  NonFiniteState,
  EmptyEnsemble,
  StabilityViolation,
  MismatchedTrajectory,
  GridMismatch,
  DegenerateRatio,
  OverflowGuard,
  PhaseUndefined,
  MissingColumn,
  EmptyData,
};

inline std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::NonConvergence: return "NonConvergence";
    case ErrorCode::NotSymmetric: return "NotSymmetric";
    case ErrorCode::NotPositiveDefinite: return "NotPositiveDefinite";
    case ErrorCode::DomainError: return "DomainError";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::NonFiniteState: return "NonFiniteState";
    case ErrorCode::EmptyEnsemble: return "EmptyEnsemble";
    case ErrorCode::StabilityViolation: return "StabilityViolation";
    case ErrorCode::MismatchedTrajectory: return "MismatchedTrajectory";
    case ErrorCode::GridMismatch: return "GridMismatch";
    case ErrorCode::DegenerateRatio: return "DegenerateRatio";
    case ErrorCode::OverflowGuard: return "OverflowGuard";
    case ErrorCode::PhaseUndefined: return "PhaseUndefined";
    case ErrorCode::MissingColumn: return "MissingColumn";
    case ErrorCode::EmptyData: return "EmptyData";
  }
  return "Unknown";
}

/// Every failure raised by the library carries one of the codes above so
/// callers (the CLI in particular) can map it to an exit status.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

inline void require(bool cond, ErrorCode code, const std::string& what) {
  if (!cond) throw Error(code, what);
}

}  // namespace geolearn
