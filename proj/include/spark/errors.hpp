#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace spark {

/// Base class for every error raised by the engine.
class SparkError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Input text is not valid UTF-8.
class EncodingError : public SparkError {
public:
    EncodingError(std::size_t byte_offset, const std::string& what)
        : SparkError(what), byte_offset_(byte_offset) {}

    std::size_t byte_offset() const noexcept { return byte_offset_; }

private:
    std::size_t byte_offset_;
};

/// A factor token was not one of the admissible values.
class InvalidFactorToken : public SparkError {
public:
    explicit InvalidFactorToken(std::string token)
        : SparkError("invalid factor token: '" + token + "'"), token_(std::move(token)) {}

    const std::string& token() const noexcept { return token_; }

private:
    std::string token_;
};

/// Invalid configuration (bad field values, missing executables, unreadable files).
class ConfigError : public SparkError {
public:
    using SparkError::SparkError;
};

/// The chat backend could not produce a response within its retry budget.
class BackendUnavailable : public SparkError {
public:
    using SparkError::SparkError;
};

/// A scripted backend ran out of queued responses for a role.
class ScriptExhausted : public SparkError {
public:
    using SparkError::SparkError;
};

/// The seed program could not be evaluated; the run has no archive to start from.
class SeedInfeasible : public SparkError {
public:
    using SparkError::SparkError;
};

/// Failure writing or reading trace and checkpoint artifacts.
class TraceError : public SparkError {
public:
    using SparkError::SparkError;
};

/// An operation was called with its precondition violated.
class PreconditionError : public SparkError {
public:
    using SparkError::SparkError;
};

}  // namespace spark
