#pragma once

#include <stdexcept>
#include <string>

namespace nec {

// Error categories mirror the status codes of the C API (see nec.h).
enum class ErrorCode {
    config = 1,
    input = 2,
    internal = 3,
    usage = 4,
    empty_memory = 5,
    io = 6,
    aggregation = 7,
};

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

/// Invalid configuration (shape chains, hyperparameter ranges, unknown keys).
class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& what) : Error(ErrorCode::config, what) {}
};

/// Caller passed data that violates an operation's precondition.
class InputError : public Error {
public:
    explicit InputError(const std::string& what) : Error(ErrorCode::input, what) {}
};

/// Broken internal invariant (stale traces, duplicate ids, unknown ids).
class InternalError : public Error {
public:
    explicit InternalError(const std::string& what) : Error(ErrorCode::internal, what) {}
};

/// API used out of order, e.g. stepping a finished episode.
class UsageError : public Error {
public:
    explicit UsageError(const std::string& what) : Error(ErrorCode::usage, what) {}
};

/// Lookup against a memory with no entries. Callers choose the fallback.
class EmptyMemoryError : public Error {
public:
    explicit EmptyMemoryError(const std::string& what) : Error(ErrorCode::empty_memory, what) {}
};

class IoError : public Error {
public:
    explicit IoError(const std::string& what) : Error(ErrorCode::io, what) {}
};

class AggregationError : public Error {
public:
    explicit AggregationError(const std::string& what) : Error(ErrorCode::aggregation, what) {}
};

}  // namespace nec
