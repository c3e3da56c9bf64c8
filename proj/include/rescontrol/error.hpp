#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace rescontrol {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Invalid configuration or model parameters. `path()` names the JSON
/// location when the error comes from a config document.
class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& what, std::string path = {})
        : Error(path.empty() ? what : path + ": " + what), path_(std::move(path)) {}
    const std::string& path() const noexcept { return path_; }

private:
    std::string path_;
};

/// Malformed tabular input; carries the 1-based line number.
class ParseError : public Error {
public:
    ParseError(const std::string& what, std::size_t line)
        : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

/// Runtime failure of a numerical routine (solver, simulation).
class SolverError : public Error {
public:
    using Error::Error;
};

class ConvergenceError : public SolverError {
public:
    ConvergenceError(const std::string& what, double residual, int sweeps)
        : SolverError(what), residual_(residual), sweeps_(sweeps) {}
    double residual() const noexcept { return residual_; }
    int sweeps() const noexcept { return sweeps_; }

private:
    double residual_;
    int sweeps_;
};

} // namespace rescontrol
