#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace flr {

enum class ErrorCode {
    InvalidArgument,
    GridMismatch,
    ParseError,
    UnsupportedDerivativeOrder,
    DegenerateDesign,
    FactorizationFailure,
    GcvUndefined,
    SelectionFailure,
    InvalidKernel,
    TruncationError,
    ConfigError,
    IoError,
};

constexpr std::string_view to_string(ErrorCode code) noexcept {
    switch (code) {
    case ErrorCode::InvalidArgument: return "invalid-argument";
    case ErrorCode::GridMismatch: return "grid-mismatch";
    case ErrorCode::ParseError: return "parse-error";
    case ErrorCode::UnsupportedDerivativeOrder: return "unsupported-derivative-order";
    case ErrorCode::DegenerateDesign: return "degenerate-design";
    case ErrorCode::FactorizationFailure: return "factorization-failure";
    case ErrorCode::GcvUndefined: return "gcv-undefined";
    case ErrorCode::SelectionFailure: return "selection-failure";
    case ErrorCode::InvalidKernel: return "invalid-kernel";
    case ErrorCode::TruncationError: return "truncation-error";
    case ErrorCode::ConfigError: return "config-error";
    case ErrorCode::IoError: return "io-error";
    }
    return "unknown";
}

/// Library-wide exception carrying a machine-checkable category.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
    throw Error(code, message);
}

} // namespace flr
