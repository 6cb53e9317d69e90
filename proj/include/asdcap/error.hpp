#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace asdcap {

enum class ErrorCode {
    InvalidInput,
    DimensionMismatch,
    DuplicateId,
    StorageError,
    CorruptStore,
    UnsupportedFormat,
    InsufficientReferences,
    DegenerateVector,
    NotFound,
    ProviderError,
    AuthError,
};

std::string_view to_string(ErrorCode code);

/// Single exception type for the library; callers branch on code().
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message);

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

}  // namespace asdcap
