#pragma once

#include <stdexcept>
#include <string>

namespace fde {

enum class ErrorKind {
    InvalidArgument,
    Config,
    NonConvergence,
    NegativeIterate,
    RootBracketFailure,
    EigensolverFailure,
    SpectrumTooShort,
    StepFailure,
    PositivityLoss,
    InsufficientDecay,
    WindowTooCoarse,
    InsufficientTrace,
    EmptyWindow,
    NonpositiveC,
    BlowUp,
    H2Violated,
};

inline const char* to_string(ErrorKind k) {
    switch (k) {
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    case ErrorKind::Config: return "Config";
    case ErrorKind::NonConvergence: return "NonConvergence";
    case ErrorKind::NegativeIterate: return "NegativeIterate";
    case ErrorKind::RootBracketFailure: return "RootBracketFailure";
    case ErrorKind::EigensolverFailure: return "EigensolverFailure";
    case ErrorKind::SpectrumTooShort: return "SpectrumTooShort";
    case ErrorKind::StepFailure: return "StepFailure";
    case ErrorKind::PositivityLoss: return "PositivityLoss";
    case ErrorKind::InsufficientDecay: return "InsufficientDecay";
    case ErrorKind::WindowTooCoarse: return "WindowTooCoarse";
    case ErrorKind::InsufficientTrace: return "InsufficientTrace";
    case ErrorKind::EmptyWindow: return "EmptyWindow";
    case ErrorKind::NonpositiveC: return "NonpositiveC";
    case ErrorKind::BlowUp: return "BlowUp";
    case ErrorKind::H2Violated: return "H2Violated";
    }
    return "Unknown";
}

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what)
        : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

inline void require(bool ok, ErrorKind kind, const std::string& what) {
    if (!ok) throw Error(kind, what);
}

} // namespace fde
