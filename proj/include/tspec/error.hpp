#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace tspec {

enum class ErrorKind {
    InvalidGrid,
    InvalidArgument,
    EigFailure,
    NoBracket,
    SingularBorder,
    SaturatedCount,
    NoNegativeDirection,
    NoSignChange,
    KernelNotSimple,
    SingularBlock,
    InvalidSpeed,
    ProfileNotPositive,
    ProfileTruncation,
    HypEulerViolated,
    BadProfileFile,
    NewtonDiverged,
    ShiftSingular,
    NoConvergence,
    ConfigError,
    IoError,
};

std::string_view to_string(ErrorKind kind) noexcept;

/// Every failure raised by the library. `kind()` is the stable, testable part;
/// the message is for humans.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message);

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

/// Newton continuation failed at a specific growth rate.
class NewtonDivergedError : public Error {
public:
    NewtonDivergedError(double sigma, const std::string& message)
        : Error(ErrorKind::NewtonDiverged, message), sigma_(sigma) {}

    double sigma() const noexcept { return sigma_; }

private:
    double sigma_;
};

}  // namespace tspec
