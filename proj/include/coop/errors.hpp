#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace coop {

/// Machine-readable error categories. The names double as the `code` field of
/// service error payloads and CLI error output.
enum class ErrorCode {
  Parse,
  Schema,
  Config,
  MissingDifficulty,
  DegenerateData,
  Arity,
  Dimension,
  EmptyInput,
  AucUndefined,
  AlreadyRevealed,
  NothingToSelect,
  MetricMismatch,
  EmptyGrid,
  Fraction,
  UnknownPolicy,
  UnknownInstance,
  UnknownSession,
  UnknownCostModel,
  BadBudget,
  WrongConcept,
  SessionFinished,
  BadRequest,
  Flag,
  ArtifactMissing,
  HashMismatch,
  Io,
  Internal,
};

std::string_view error_name(ErrorCode code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  [[nodiscard]] ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

}  // namespace coop
