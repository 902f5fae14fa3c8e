#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace heartsteps {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A precondition on an argument was violated.
class InvalidArgument : public Error {
public:
    using Error::Error;
};

/// Malformed input file (CSV, JSON).
class ParseError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

/// A matrix that must be positive definite could not be factored.
class NumericalError : public Error {
public:
    using Error::Error;
};

/// Design matrix lacks full column rank.
class RankDeficient : public Error {
public:
    RankDeficient(const std::string& what, std::vector<std::string> columns)
        : Error(what), columns_(std::move(columns)) {}
    const std::vector<std::string>& columns() const noexcept { return columns_; }

private:
    std::vector<std::string> columns_;
};

/// Value iteration hit its iteration cap.
class ConvergenceError : public Error {
public:
    ConvergenceError(const std::string& what, double residual)
        : Error(what), residual_(residual) {}
    double residual() const noexcept { return residual_; }

private:
    double residual_;
};

}  // namespace heartsteps
