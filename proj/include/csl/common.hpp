#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace csl {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Operand shapes disagree (parameter length vs. shard columns, etc).
class DimensionError : public Error {
public:
    using Error::Error;
};

/// Input outside the domain of an operation: non-binary Bernoulli response,
/// non-finite values, invalid settings.
class DomainError : public Error {
public:
    using Error::Error;
};

/// A matrix that must be inverted is singular or indefinite.
class SingularMatrixError : public Error {
public:
    SingularMatrixError(const std::string& what, double min_eigenvalue)
        : Error(what + " (min eigenvalue " + std::to_string(min_eigenvalue) + ")"),
          min_eigenvalue_(min_eigenvalue) {}
    double min_eigenvalue() const { return min_eigenvalue_; }

private:
    double min_eigenvalue_;
};

/// An iterative solver ran out of iterations. Carries the last iterate.
class ConvergenceError : public Error {
public:
    ConvergenceError(const std::string& what, Vector last_iterate, double grad_norm)
        : Error(what), last_iterate_(std::move(last_iterate)), grad_norm_(grad_norm) {}
    const Vector& last_iterate() const { return last_iterate_; }
    double grad_norm() const { return grad_norm_; }

private:
    Vector last_iterate_;
    double grad_norm_;
};

/// A cluster round failed on a particular worker (1-based index, matching
/// machine numbering where worker 1 is the center).
class RoundError : public Error {
public:
    RoundError(std::size_t worker, const std::string& what)
        : Error("worker " + std::to_string(worker) + ": " + what), worker_(worker) {}
    std::size_t worker() const { return worker_; }

private:
    std::size_t worker_;
};

/// Failure inside one iteration of an iterative estimator; the original
/// error is attached as a nested exception.
class IterationError : public Error {
public:
    IterationError(std::size_t iteration, const std::string& what)
        : Error("iteration " + std::to_string(iteration) + ": " + what), iteration_(iteration) {}
    std::size_t iteration() const { return iteration_; }

private:
    std::size_t iteration_;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

inline bool all_finite(const Vector& v) { return v.allFinite(); }

inline void require_dim(const Vector& v, Eigen::Index d, const char* what) {
    if (v.size() != d) {
        throw DimensionError(std::string(what) + ": expected length " + std::to_string(d) +
                             ", got " + std::to_string(v.size()));
    }
}

}  // namespace csl
