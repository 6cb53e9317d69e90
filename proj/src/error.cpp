#include "asdcap/error.hpp"

namespace asdcap {

std::string_view to_string(ErrorCode code)
{
    switch (code) {
    case ErrorCode::InvalidInput: return "InvalidInput";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::DuplicateId: return "DuplicateId";
    case ErrorCode::StorageError: return "StorageError";
    case ErrorCode::CorruptStore: return "CorruptStore";
    case ErrorCode::UnsupportedFormat: return "UnsupportedFormat";
    case ErrorCode::InsufficientReferences: return "InsufficientReferences";
    case ErrorCode::DegenerateVector: return "DegenerateVector";
    case ErrorCode::NotFound: return "NotFound";
    case ErrorCode::ProviderError: return "ProviderError";
    case ErrorCode::AuthError: return "AuthError";
    }
    return "Unknown";
}

Error::Error(ErrorCode code, const std::string& message)
    : std::runtime_error(std::string(to_string(code)) + ": " + message),
      code_(code)
{
}

}  // namespace asdcap
