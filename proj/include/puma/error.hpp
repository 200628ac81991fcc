#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace puma {

enum class ErrorCode {
  AllZero,
  DimensionMismatch,
  SupportViolation,
  WeightOutOfRange,
  InvalidDistribution,
  UnknownLabel,
  UnknownAction,
  ZeroEvidence,
  InvalidWeights,
  EmptyActionSet,
  EmptyText,
  TemplateMissing,
  PlaceholderUnresolved,
  BackendUnavailable,
  EmptyTriggerSet,
  EmptyInput,
  NoGoldLabels,
  InvalidConfig,
  ParseError,
  IoError,
};

std::string_view to_string(ErrorCode code);

/// Single exception type for the library; callers branch on code().
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace puma
