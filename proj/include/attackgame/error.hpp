#pragma once

#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace attackgame {

enum class ErrorCode {
    SyntaxError,
    CycleDetected,
    MultipleTargets,
    UnreachableTarget,
    DanglingNode,
    AttributeOutOfRange,
    InvestableTarget,
    DuplicateNode,
    UnknownNode,
    EmptyGraph,
    ValidationFailed,
    PathExplosion,
    NonConvergence,
    TooManyInvestableNodes,
    NotDecomposable,
    DegenerateKappa,
    DegenerateDenominator,
    UnequalInputLosses,
    InfeasibleBackmap,
    InvalidAnchor,
    RegimeViolation,
    InvalidArgument,
};

inline std::string_view to_string(ErrorCode c) {
    switch (c) {
        case ErrorCode::SyntaxError: return "SyntaxError";
        case ErrorCode::CycleDetected: return "CycleDetected";
        case ErrorCode::MultipleTargets: return "MultipleTargets";
        case ErrorCode::UnreachableTarget: return "UnreachableTarget";
        case ErrorCode::DanglingNode: return "DanglingNode";
        case ErrorCode::AttributeOutOfRange: return "AttributeOutOfRange";
        case ErrorCode::InvestableTarget: return "InvestableTarget";
        case ErrorCode::DuplicateNode: return "DuplicateNode";
        case ErrorCode::UnknownNode: return "UnknownNode";
        case ErrorCode::EmptyGraph: return "EmptyGraph";
        case ErrorCode::ValidationFailed: return "ValidationFailed";
        case ErrorCode::PathExplosion: return "PathExplosion";
        case ErrorCode::NonConvergence: return "NonConvergence";
        case ErrorCode::TooManyInvestableNodes: return "TooManyInvestableNodes";
        case ErrorCode::NotDecomposable: return "NotDecomposable";
        case ErrorCode::DegenerateKappa: return "DegenerateKappa";
        case ErrorCode::DegenerateDenominator: return "DegenerateDenominator";
        case ErrorCode::UnequalInputLosses: return "UnequalInputLosses";
        case ErrorCode::InfeasibleBackmap: return "InfeasibleBackmap";
        case ErrorCode::InvalidAnchor: return "InvalidAnchor";
        case ErrorCode::RegimeViolation: return "RegimeViolation";
        case ErrorCode::InvalidArgument: return "InvalidArgument";
    }
    return "Unknown";
}

// One problem found while checking a document or graph. `location` is a
// JSON pointer into the source document when one is known.
struct Violation {
    ErrorCode code;
    std::string message;
    std::string location;
};

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message, std::vector<Violation> details = {})
        : std::runtime_error(message), code_(code), details_(std::move(details)) {}

    ErrorCode code() const noexcept { return code_; }
    const std::vector<Violation>& details() const noexcept { return details_; }

private:
    ErrorCode code_;
    std::vector<Violation> details_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
    throw Error(code, std::string(to_string(code)) + ": " + message);
}

}  // namespace attackgame
