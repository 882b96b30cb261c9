#pragma once

#include <stdexcept>
#include <string>

namespace sparsemp {

/// Invalid model, domain or campaign parameters. Maps to CLI exit code 2.
class ParameterError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Index sets that do not fit the matrix they are applied to.
class IndexError : public std::out_of_range {
public:
    using std::out_of_range::out_of_range;
};

/// A factorization did not converge.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// An exact identity failed to balance. Maps to CLI exit code 1.
class IdentityFailure : public std::runtime_error {
public:
    IdentityFailure(const std::string& what, double residual)
        : std::runtime_error(what), residual_(residual) {}
    double residual() const noexcept { return residual_; }

private:
    double residual_;
};

/// Adaptive quadrature could not reach the requested tolerance.
class QuadratureError : public std::runtime_error {
public:
    QuadratureError(const std::string& what, double achieved)
        : std::runtime_error(what), achieved_(achieved) {}
    double achieved_error() const noexcept { return achieved_; }

private:
    double achieved_;
};

/// The moment requested does not exist for the distribution.
class DivergentMomentError : public ParameterError {
public:
    using ParameterError::ParameterError;
};

/// Exact enumeration requested for a distribution that is not finitely supported.
class UnsupportedError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

/// Conditioning event removed every replication.
class DegenerateConditioningError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

namespace detail {
inline void require(bool ok, const std::string& msg) {
    if (!ok) throw ParameterError(msg);
}
}  // namespace detail

}  // namespace sparsemp
