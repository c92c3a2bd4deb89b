#pragma once

#include <stdexcept>
#include <string>

namespace prodenv {

/// Broad failure classes. The CLI maps these onto process exit codes.
enum class ErrorKind {
    Argument,        ///< caller passed malformed input (dimension mismatch, empty list, ...)
    Config,          ///< configuration or schema validation failure
    Identification,  ///< data do not support the identifying assumptions
    Numeric,         ///< non-finite evaluation, singular system, solver breakdown
    Unbounded,       ///< optimization problem has no finite optimum
};

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

struct ArgumentError : Error {
    explicit ArgumentError(const std::string& w) : Error(ErrorKind::Argument, w) {}
};

struct ConfigError : Error {
    explicit ConfigError(const std::string& w) : Error(ErrorKind::Config, w) {}
};

struct IdentificationError : Error {
    explicit IdentificationError(const std::string& w) : Error(ErrorKind::Identification, w) {}
};

struct NumericError : Error {
    explicit NumericError(const std::string& w) : Error(ErrorKind::Numeric, w) {}
};

struct UnboundedError : Error {
    explicit UnboundedError(const std::string& w) : Error(ErrorKind::Unbounded, w) {}
};

/// Exit codes: 0 success, 2 validation, 3 identification failure, 4 numeric.
inline int exit_code_for(ErrorKind kind) noexcept {
    switch (kind) {
        case ErrorKind::Argument:
        case ErrorKind::Config: return 2;
        case ErrorKind::Identification: return 3;
        case ErrorKind::Numeric:
        case ErrorKind::Unbounded: return 4;
    }
    return 4;
}

}  // namespace prodenv
