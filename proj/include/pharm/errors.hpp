#pragma once

#include <stdexcept>
#include <string>

namespace pharm {

/// Argument outside the mathematical domain of a function (r <= 0, x = 0, ...).
class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

/// Invalid or inadmissible problem / mesh / run configuration.
class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// A documented precondition of an operation was violated by the caller.
class PreconditionError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

/// A nonlinear solve or root find did not converge.
class SolverError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// The independent shooting oracle could not bracket its flux constant.
class OracleError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace pharm
