#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace latentcast {

enum class ErrorKind {
    Format,
    UnsupportedDtype,
    Truncation,
    InconsistentSequence,
    Gap,
    InsufficientData,
    TooShort,
    Channel,
    Size,
    Shape,
    State,
    NonFinite,
    Config,
    Window,
    DegenerateStats,
    DegenerateRange,
    Grid,
    Fold,
    Io,
    Usage,
    TrainingAbort,
};

std::string_view to_string(ErrorKind kind);

/// Every failure raised by the library carries a kind so callers (and the CLI
/// exit-code mapping) can branch without string matching.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

/// CLI exit codes: 0 success, 1 usage, 2 data error, 3 training abort.
int exit_code_for(ErrorKind kind);

} // namespace latentcast
