#pragma once

#include <stdexcept>
#include <string>

namespace tacit {

/// Stable failure categories; the CLI prints one of these tokens on exit.
enum class ErrorCategory {
    invalid_argument,
    io_error,
    format_error,
    config_mismatch,
    numeric_error,
    internal,
};

inline const char* to_string(ErrorCategory c) {
    switch (c) {
        case ErrorCategory::invalid_argument: return "invalid_argument";
        case ErrorCategory::io_error: return "io_error";
        case ErrorCategory::format_error: return "format_error";
        case ErrorCategory::config_mismatch: return "config_mismatch";
        case ErrorCategory::numeric_error: return "numeric_error";
        case ErrorCategory::internal: return "internal";
    }
    return "internal";
}

class Error : public std::runtime_error {
public:
    Error(ErrorCategory category, const std::string& message)
        : std::runtime_error(message), category_(category) {}

    ErrorCategory category() const noexcept { return category_; }

private:
    ErrorCategory category_;
};

[[noreturn]] inline void fail(ErrorCategory category, const std::string& message) {
    throw Error(category, message);
}

inline void require(bool cond, ErrorCategory category, const std::string& message) {
    if (!cond) fail(category, message);
}

}  // namespace tacit
