#include "spatial/error.hpp"

namespace spatial {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::InvalidParameter: return "InvalidParameter";
    case ErrorCode::DegenerateFrame: return "DegenerateFrame";
    case ErrorCode::DegenerateTarget: return "DegenerateTarget";
    case ErrorCode::MissingObject: return "MissingObject";
    case ErrorCode::OutOfBounds: return "OutOfBounds";
    case ErrorCode::BudgetExhausted: return "BudgetExhausted";
    case ErrorCode::SchemaMismatch: return "SchemaMismatch";
    case ErrorCode::CorruptFile: return "CorruptFile";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::StaleCache: return "StaleCache";
    case ErrorCode::EmptyFold: return "EmptyFold";
    case ErrorCode::MissingFeatures: return "MissingFeatures";
    case ErrorCode::DegenerateVariance: return "DegenerateVariance";
    case ErrorCode::EmptyCategory: return "EmptyCategory";
    case ErrorCode::Io: return "Io";
  }
  return "Unknown";
}

Error::Error(ErrorCode code, const std::string& message)
    : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

}  // namespace spatial
