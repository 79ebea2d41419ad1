#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>
#include <utility>

namespace mlsis
{

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index  = Eigen::Index;

/// Base class for every error raised by the library.
class Error : public std::runtime_error
{
public:
    using std::runtime_error::runtime_error;
};

/// Input lies outside the domain of an operation (wrong shape, non-positive population, ...).
class DomainError : public Error
{
public:
    using Error::Error;
};

/// A rate matrix is not a CTMC generator (negative off-diagonal, non-zero row sum).
class MalformedGenerator : public Error
{
public:
    using Error::Error;
};

/// A mobility layer is not strongly connected.
class AssumptionViolation : public Error
{
public:
    using Error::Error;
};

/// An iterative solver stopped before reaching its tolerance.
class ConvergenceError : public Error
{
public:
    ConvergenceError(const std::string& what, double residual)
        : Error(what + " (residual " + std::to_string(residual) + ")")
        , m_residual(residual)
    {
    }

    double residual() const
    {
        return m_residual;
    }

private:
    double m_residual;
};

/// Time integration left the state space by more than the clamp tolerance.
class IntegrationError : public Error
{
public:
    using Error::Error;
};

/// A step size makes a one-step transition probability leave [0, 1].
class StepSizeError : public Error
{
public:
    using Error::Error;
};

/// Scenario input failed validation; `field()` names the offending entry.
class ValidationError : public Error
{
public:
    ValidationError(std::string field, const std::string& message)
        : Error(field + ": " + message)
        , m_field(std::move(field))
    {
    }

    const std::string& field() const
    {
        return m_field;
    }

private:
    std::string m_field;
};

/// Position of (class, node) in a stacked nm-vector. Layers are stored
/// one after another: `[p^1; p^2; ...; p^m]`.
constexpr Index flat_index(Index layer, Index node, Index num_nodes)
{
    return layer * num_nodes + node;
}

} // namespace mlsis
