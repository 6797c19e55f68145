#include "hamflow/error.hpp"

namespace hamflow {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::NonPSDHessian: return "NonPSDHessian";
    case ErrorCode::UnknownExample: return "UnknownExample";
    case ErrorCode::SingularG: return "SingularG";
    case ErrorCode::BadPartition: return "BadPartition";
    case ErrorCode::InsufficientSamples: return "InsufficientSamples";
    case ErrorCode::NotStabilizable: return "NotStabilizable";
    case ErrorCode::NotDetectable: return "NotDetectable";
    case ErrorCode::IllConditionedSubspace: return "IllConditionedSubspace";
    case ErrorCode::NotHurwitz: return "NotHurwitz";
    case ErrorCode::NotNegativeSemidefinite: return "NotNegativeSemidefinite";
    case ErrorCode::StepSizeUnderflow: return "StepSizeUnderflow";
    case ErrorCode::NonFiniteState: return "NonFiniteState";
    case ErrorCode::NoConvergence: return "NoConvergence";
    case ErrorCode::Uncovered: return "Uncovered";
    case ErrorCode::ShootingDiverged: return "ShootingDiverged";
    case ErrorCode::IntegratorEscape: return "IntegratorEscape";
    case ErrorCode::ConfigError: return "ConfigError";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
  }
  return "Unknown";
}

}  // namespace hamflow
