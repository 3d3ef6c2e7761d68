#pragma once

#include <stdexcept>
#include <string>

namespace odrift {

// Every failure surfaced by the library derives from Error. The category
// decides the CLI exit code (see tools/odrift_cli.cpp).
enum class ErrorCategory { runtime, usage, format };

class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what, ErrorCategory category = ErrorCategory::runtime)
        : std::runtime_error(what), category_(category) {}
    ErrorCategory category() const noexcept { return category_; }

private:
    ErrorCategory category_;
};

// Shape or dimension mismatch between inputs.
class StructuralError : public Error {
public:
    explicit StructuralError(const std::string& what) : Error("structural: " + what) {}
};

// Operation invoked in the wrong lifecycle state.
class StateError : public Error {
public:
    explicit StateError(const std::string& what) : Error("state: " + what) {}
};

class PreconditionError : public Error {
public:
    explicit PreconditionError(const std::string& what) : Error("precondition: " + what) {}
};

// Non-finite loss or gradient. Carries the phase that produced it.
class TrainingError : public Error {
public:
    TrainingError(const std::string& phase, const std::string& what)
        : Error("training [" + phase + "]: " + what), phase_(phase) {}
    const std::string& phase() const noexcept { return phase_; }

private:
    std::string phase_;
};

class FormatError : public Error {
public:
    explicit FormatError(const std::string& what)
        : Error("format: " + what, ErrorCategory::format) {}
};

class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& what)
        : Error("config: " + what, ErrorCategory::usage) {}
};

class QueryError : public Error {
public:
    explicit QueryError(const std::string& what) : Error("query: " + what) {}
};

}  // namespace odrift
