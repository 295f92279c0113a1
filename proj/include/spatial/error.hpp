#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace spatial {

enum class ErrorCode {
  InvalidParameter,
  DegenerateFrame,
  DegenerateTarget,
  MissingObject,
  OutOfBounds,
  BudgetExhausted,
  SchemaMismatch,
  CorruptFile,
  ShapeMismatch,
  EmptyInput,
  StaleCache,
  EmptyFold,
  MissingFeatures,
  DegenerateVariance,
  EmptyCategory,
  Io,
};

std::string_view to_string(ErrorCode code) noexcept;

/// Every failure raised by the library carries a machine-readable code; the
/// CLI prints it verbatim so scripts can branch on it.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message);

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace spatial
