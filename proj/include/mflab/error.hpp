#pragma once

#include <stdexcept>
#include <string>

namespace mflab {

enum class ErrorCode {
    UnsupportedDomain,
    MalformedHeader,
    DimensionMismatch,
    NonFinite,
    Io,
    TorusMeanNonzero,
    ResolutionTooSmall,
    FunctionalUnsupported,
    DomainMismatch,
    FunctionDomain,
    SizeMismatch,
    Overlap,
    NotBistochastic,
    MatchingFailure,
    CutoffTooLarge,
    InfeasibleEnergy,
    NonConvergence,
    Degenerate,
    EpsUnresolved,
    Precondition,
    ParameterOutOfRange,
    Divergence,
    LevelCap,
    WindowTooLarge,
    Config,
};

inline const char* error_name(ErrorCode c) {
    switch (c) {
    case ErrorCode::UnsupportedDomain: return "unsupported-domain";
    case ErrorCode::MalformedHeader: return "malformed-header";
    case ErrorCode::DimensionMismatch: return "dimension-mismatch";
    case ErrorCode::NonFinite: return "non-finite";
    case ErrorCode::Io: return "io";
    case ErrorCode::TorusMeanNonzero: return "torus-mean-nonzero";
    case ErrorCode::ResolutionTooSmall: return "resolution-too-small";
    case ErrorCode::FunctionalUnsupported: return "functional-unsupported-on-domain";
    case ErrorCode::DomainMismatch: return "domain-mismatch";
    case ErrorCode::FunctionDomain: return "f-domain-violation";
    case ErrorCode::SizeMismatch: return "size-mismatch";
    case ErrorCode::Overlap: return "overlap";
    case ErrorCode::NotBistochastic: return "not-bistochastic";
    case ErrorCode::MatchingFailure: return "matching-failure";
    case ErrorCode::CutoffTooLarge: return "cutoff-too-large";
    case ErrorCode::InfeasibleEnergy: return "infeasible-energy";
    case ErrorCode::NonConvergence: return "nonconvergence";
    case ErrorCode::Degenerate: return "degenerate";
    case ErrorCode::EpsUnresolved: return "eps-unresolved";
    case ErrorCode::Precondition: return "precondition";
    case ErrorCode::ParameterOutOfRange: return "parameter-out-of-range";
    case ErrorCode::Divergence: return "divergence";
    case ErrorCode::LevelCap: return "level-count-cap";
    case ErrorCode::WindowTooLarge: return "window-exceeds-trajectory";
    case ErrorCode::Config: return "config";
    }
    return "unknown";
}

/// Structured module error; what() reads "<code>: <message>".
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& msg)
        : std::runtime_error(std::string(error_name(code)) + ": " + msg), code_(code) {}
    ErrorCode code() const { return code_; }

private:
    ErrorCode code_;
};

} // namespace mflab
