#include "collapse/error.hpp"

namespace collapse {

std::string_view to_string(ErrorCode code) {
    switch (code) {
        case ErrorCode::DimensionMismatch: return "DimensionMismatch";
        case ErrorCode::InvalidNetwork: return "InvalidNetwork";
        case ErrorCode::InvalidDistribution: return "InvalidDistribution";
        case ErrorCode::InvalidExperiment: return "InvalidExperiment";
        case ErrorCode::NoConvergence: return "NoConvergence";
        case ErrorCode::SingularJacobian: return "SingularJacobian";
        case ErrorCode::SingularKKTJacobian: return "SingularKKTJacobian";
        case ErrorCode::WrongSideSolution: return "WrongSideSolution";
        case ErrorCode::DualMismatch: return "DualMismatch";
        case ErrorCode::NominalInfeasible: return "NominalInfeasible";
        case ErrorCode::NoBoundaryFound: return "NoBoundaryFound";
        case ErrorCode::NotSingular: return "NotSingular";
        case ErrorCode::BorderedSingular: return "BorderedSingular";
        case ErrorCode::AlignmentFailure: return "AlignmentFailure";
        case ErrorCode::CurvatureBreakdown: return "CurvatureBreakdown";
        case ErrorCode::ParseError: return "ParseError";
    }
    return "Unknown";
}

Error::Error(ErrorCode code, const std::string& message)
    : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

}  // namespace collapse
