#include "tspec/error.hpp"

namespace tspec {

std::string_view to_string(ErrorKind kind) noexcept {
    switch (kind) {
        case ErrorKind::InvalidGrid: return "InvalidGrid";
        case ErrorKind::InvalidArgument: return "InvalidArgument";
        case ErrorKind::EigFailure: return "EigFailure";
        case ErrorKind::NoBracket: return "NoBracket";
        case ErrorKind::SingularBorder: return "SingularBorder";
        case ErrorKind::SaturatedCount: return "SaturatedCount";
        case ErrorKind::NoNegativeDirection: return "NoNegativeDirection";
        case ErrorKind::NoSignChange: return "NoSignChange";
        case ErrorKind::KernelNotSimple: return "KernelNotSimple";
        case ErrorKind::SingularBlock: return "SingularBlock";
        case ErrorKind::InvalidSpeed: return "InvalidSpeed";
        case ErrorKind::ProfileNotPositive: return "ProfileNotPositive";
        case ErrorKind::ProfileTruncation: return "ProfileTruncation";
        case ErrorKind::HypEulerViolated: return "HypEulerViolated";
        case ErrorKind::BadProfileFile: return "BadProfileFile";
        case ErrorKind::NewtonDiverged: return "NewtonDiverged";
        case ErrorKind::ShiftSingular: return "ShiftSingular";
        case ErrorKind::NoConvergence: return "NoConvergence";
        case ErrorKind::ConfigError: return "ConfigError";
        case ErrorKind::IoError: return "IoError";
    }
    return "Unknown";
}

Error::Error(ErrorKind kind, const std::string& message)
    : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

}  // namespace tspec
