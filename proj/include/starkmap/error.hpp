#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace starkmap {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Invalid or inconsistent configuration / contract violation by the caller.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Filesystem or stream failure.
class IoError : public Error {
public:
    using Error::Error;
};

/// Malformed input file. `line` is 1-based, 0 when not attributable to a line.
class ParseError : public IoError {
public:
    ParseError(const std::string& what, int line)
        : IoError(line > 0 ? what + " (line " + std::to_string(line) + ")" : what), line_(line) {}
    int line() const noexcept { return line_; }

private:
    int line_;
};

/// Argument outside the mathematical domain of a function.
class DomainError : public Error {
public:
    using Error::Error;
};

/// An iterative method ran out of iterations. Carries the residual history.
class ConvergenceError : public Error {
public:
    ConvergenceError(const std::string& what, std::vector<double> history)
        : Error(what), history_(std::move(history)) {}
    const std::vector<double>& history() const noexcept { return history_; }

private:
    std::vector<double> history_;
};

}  // namespace starkmap
