#include "latentcast/error.hpp"

namespace latentcast {

std::string_view to_string(ErrorKind kind) {
    switch (kind) {
    case ErrorKind::Format: return "format error";
    case ErrorKind::UnsupportedDtype: return "unsupported dtype";
    case ErrorKind::Truncation: return "truncation error";
    case ErrorKind::InconsistentSequence: return "inconsistent sequence";
    case ErrorKind::Gap: return "gap error";
    case ErrorKind::InsufficientData: return "insufficient data";
    case ErrorKind::TooShort: return "too short";
    case ErrorKind::Channel: return "channel error";
    case ErrorKind::Size: return "size error";
    case ErrorKind::Shape: return "shape error";
    case ErrorKind::State: return "state error";
    case ErrorKind::NonFinite: return "non-finite value";
    case ErrorKind::Config: return "config error";
    case ErrorKind::Window: return "window error";
    case ErrorKind::DegenerateStats: return "degenerate stats";
    case ErrorKind::DegenerateRange: return "degenerate range";
    case ErrorKind::Grid: return "grid error";
    case ErrorKind::Fold: return "fold error";
    case ErrorKind::Io: return "I/O error";
    case ErrorKind::Usage: return "usage error";
    case ErrorKind::TrainingAbort: return "training aborted";
    }
    return "error";
}

int exit_code_for(ErrorKind kind) {
    switch (kind) {
    case ErrorKind::Usage:
    case ErrorKind::Config:
    case ErrorKind::Grid:
        return 1;
    case ErrorKind::NonFinite:
    case ErrorKind::TrainingAbort:
        return 3;
    default:
        return 2;
    }
}

} // namespace latentcast
