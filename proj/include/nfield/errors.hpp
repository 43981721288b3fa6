#pragma once

#include <stdexcept>
#include <string>

namespace nf {

// Base for all library errors so callers can catch one type.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct GridMismatchError : Error {
    using Error::Error;
};

// Construction-time parameter violation; the message names the inequality.
struct ConstraintError : Error {
    using Error::Error;
};

struct WeightDegenerateError : Error {
    using Error::Error;
};

struct DefinitenessError : Error {
    using Error::Error;
};

struct TrivialSubspaceError : Error {
    using Error::Error;
};

struct SubspaceMembershipError : Error {
    SubspaceMembershipError(const std::string& what, double residual)
        : Error(what), residual(residual) {}
    double residual;
};

struct NotLipschitzError : Error {
    using Error::Error;
};

struct DeclaredConstantError : Error {
    using Error::Error;
};

struct BlowUpError : Error {
    BlowUpError(const std::string& what, double time)
        : Error(what), time(time) {}
    double time;
};

struct ConfigError : Error {
    using Error::Error;
};

}  // namespace nf
