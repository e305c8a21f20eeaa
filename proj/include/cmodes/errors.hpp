#pragma once

#include <stdexcept>
#include <string>

namespace cmodes {

/// Exit codes shared by the CLI and the Python bindings.
enum class ErrorCode : int {
    kValidation = 1,
    kNumerical = 2,
};

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

/// Bad configuration, bad arguments, violated parameter invariants.
class ValidationError : public Error {
public:
    explicit ValidationError(const std::string& what) : Error(ErrorCode::kValidation, what) {}
};

/// Non-convergence, non-finite values, singular systems.
class NumericalError : public Error {
public:
    explicit NumericalError(const std::string& what) : Error(ErrorCode::kNumerical, what) {}
};

/// Requested power transfer exceeds what the network can carry.
class InfeasibleError : public NumericalError {
public:
    explicit InfeasibleError(const std::string& what) : NumericalError(what) {}
};

}  // namespace cmodes
