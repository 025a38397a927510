#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace accelmap {

enum class Severity { error, warning, notice };

/// One finding from a validation pass. `field` names the offending input
/// (a config field, a tile, a layer id); `rule` is a short stable tag.
struct Diagnostic {
    Severity severity = Severity::error;
    std::string field;
    std::string rule;
    std::string message;
};

std::string to_string(const Diagnostic& d);
std::string join_diagnostics(const std::vector<Diagnostic>& diags);

/// Base for every error this library throws. `exit_code()` is the process
/// status the CLI reports for the failure class.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what, std::vector<Diagnostic> diags = {})
        : std::runtime_error(what), diagnostics_(std::move(diags)) {}

    const std::vector<Diagnostic>& diagnostics() const noexcept { return diagnostics_; }
    virtual int exit_code() const noexcept { return 1; }

private:
    std::vector<Diagnostic> diagnostics_;
};

/// Bad command line: unknown flags, missing or conflicting options.
class UsageError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
    int exit_code() const noexcept override { return 2; }
};

class ModelError : public Error {
public:
    using Error::Error;
    int exit_code() const noexcept override { return 3; }
};

/// Raised for shape or layout inconsistencies inside tensor operations.
class ShapeError : public Error {
public:
    using Error::Error;
    int exit_code() const noexcept override { return 3; }
};

class MappingError : public Error {
public:
    using Error::Error;
    int exit_code() const noexcept override { return 4; }
};

class SimulationError : public Error {
public:
    using Error::Error;
    int exit_code() const noexcept override { return 4; }
};

class IoError : public Error {
public:
    using Error::Error;
    int exit_code() const noexcept override { return 5; }
};

}  // namespace accelmap
