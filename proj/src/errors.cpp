#include "coop/errors.hpp"

namespace coop {

std::string_view error_name(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::Parse: return "ParseError";
    case ErrorCode::Schema: return "SchemaError";
    case ErrorCode::Config: return "ConfigError";
    case ErrorCode::MissingDifficulty: return "MissingDifficultyError";
    case ErrorCode::DegenerateData: return "DegenerateDataError";
    case ErrorCode::Arity: return "ArityError";
    case ErrorCode::Dimension: return "DimensionError";
    case ErrorCode::EmptyInput: return "EmptyInputError";
    case ErrorCode::AucUndefined: return "AucUndefinedError";
    case ErrorCode::AlreadyRevealed: return "AlreadyRevealedError";
    case ErrorCode::NothingToSelect: return "NothingToSelectError";
    case ErrorCode::MetricMismatch: return "MetricMismatchError";
    case ErrorCode::EmptyGrid: return "EmptyGridError";
    case ErrorCode::Fraction: return "FractionError";
    case ErrorCode::UnknownPolicy: return "UnknownPolicyError";
    case ErrorCode::UnknownInstance: return "UnknownInstanceError";
    case ErrorCode::UnknownSession: return "UnknownSessionError";
    case ErrorCode::UnknownCostModel: return "UnknownCostModelError";
    case ErrorCode::BadBudget: return "BadBudgetError";
    case ErrorCode::WrongConcept: return "WrongConceptError";
    case ErrorCode::SessionFinished: return "SessionFinishedError";
    case ErrorCode::BadRequest: return "BadRequestError";
    case ErrorCode::Flag: return "FlagError";
    case ErrorCode::ArtifactMissing: return "ArtifactMissingError";
    case ErrorCode::HashMismatch: return "HashMismatchError";
    case ErrorCode::Io: return "IoError";
    case ErrorCode::Internal: return "InternalError";
  }
  return "InternalError";
}

}  // namespace coop
