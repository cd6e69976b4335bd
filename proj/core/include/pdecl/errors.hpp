#pragma once

#include <stdexcept>
#include <string>

namespace pdecl {

/// Base error with a stable machine-parsable category tag.
class Error : public std::runtime_error {
public:
    Error(std::string category, const std::string& message)
        : std::runtime_error(message), category_(std::move(category)) {}

    const std::string& category() const noexcept { return category_; }

private:
    std::string category_;
};

/// Bad arguments: shape mismatches, non-finite inputs, out-of-domain points.
class InvalidInput : public Error {
public:
    explicit InvalidInput(const std::string& message) : Error("invalid-input", message) {}
};

/// Inconsistent or unsupported configuration (unknown keys, bad activations, ...).
class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& message) : Error("config", message) {}
};

/// A solver could not produce a usable result at all (distinct from
/// returning a best-effort iterate with converged=false).
class SolverFailure : public Error {
public:
    explicit SolverFailure(const std::string& message) : Error("solver", message) {}
};

/// File format or filesystem problems.
class IoError : public Error {
public:
    explicit IoError(const std::string& message) : Error("io", message) {}
};

} // namespace pdecl
