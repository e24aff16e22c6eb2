#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace collapse {

enum class ErrorCode {
    DimensionMismatch,
    InvalidNetwork,
    InvalidDistribution,
    InvalidExperiment,
    NoConvergence,
    SingularJacobian,
    SingularKKTJacobian,
    WrongSideSolution,
    DualMismatch,
    NominalInfeasible,
    NoBoundaryFound,
    NotSingular,
    BorderedSingular,
    AlignmentFailure,
    CurvatureBreakdown,
    ParseError,
};

std::string_view to_string(ErrorCode code);

/// Library-wide exception. `code()` identifies the failure class so callers
/// can branch (e.g. retry an instanton solve on WrongSideSolution).
class Error : public std::runtime_error {
  public:
    Error(ErrorCode code, const std::string& message);

    [[nodiscard]] ErrorCode code() const noexcept { return code_; }

  private:
    ErrorCode code_;
};

}  // namespace collapse
