#pragma once

#include <stdexcept>
#include <string>

namespace kwc {

/// Input violates a documented precondition (bad parameter, bad config key).
class ConfigError : public std::invalid_argument {
public:
    explicit ConfigError(const std::string& what) : std::invalid_argument(what) {}
};

/// Arrays that must share a grid do not.
class ShapeError : public std::invalid_argument {
public:
    explicit ShapeError(const std::string& what) : std::invalid_argument(what) {}
};

/// Coefficients outside the admissible class of the linear system.
class DomainError : public std::domain_error {
public:
    explicit DomainError(const std::string& what) : std::domain_error(what) {}
};

/// A solver failed to produce a result (breakdown, non-convergence after retries).
class NumericalError : public std::runtime_error {
public:
    explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

/// Derivative of f_0 requested at the kink; use a Sgn selection instead.
class SubdifferentialPoint : public std::domain_error {
public:
    SubdifferentialPoint() : std::domain_error("f_eps derivative requested at eps = 0, xi = 0 (subdifferential point)") {}
};

} // namespace kwc
