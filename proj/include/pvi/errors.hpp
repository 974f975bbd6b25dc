#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace pvi {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Shape mismatch between fields, grids or component counts.
class DimensionError : public Error {
public:
    using Error::Error;
};

/// Argument outside the mathematical domain of an operation.
class DomainError : public Error {
public:
    using Error::Error;
};

class PreconditionError : public Error {
public:
    using Error::Error;
};

class NotApplicableError : public Error {
public:
    using Error::Error;
};

class UnsupportedProjectionError : public Error {
public:
    using Error::Error;
};

/// The constraint set is empty at the requested time.
class InfeasibleError : public Error {
public:
    using Error::Error;
};

/// A sampled coefficient escaped its declared bounds.
class CoefficientBoundsError : public Error {
public:
    CoefficientBoundsError(const std::string& what, std::size_t node)
        : Error(what), node_(node) {}
    std::size_t node() const noexcept { return node_; }

private:
    std::size_t node_;
};

/// An iterative solver hit its iteration cap.
class SolverError : public Error {
public:
    SolverError(const std::string& what, double last_residual)
        : Error(what), last_residual_(last_residual) {}
    double last_residual() const noexcept { return last_residual_; }

private:
    double last_residual_;
};

/// The outer fixed-point loop did not reach its tolerance.
class NonConvergenceError : public Error {
public:
    NonConvergenceError(const std::string& what, std::vector<double> history)
        : Error(what), history_(std::move(history)) {}
    const std::vector<double>& history() const noexcept { return history_; }

private:
    std::vector<double> history_;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

} // namespace pvi
