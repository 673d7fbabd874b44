#pragma once

#include <functional>

#include "csl/common.hpp"

namespace csl {

struct SolverSettings {
    double grad_tol = 1e-8;  ///< sup-norm gradient stopping threshold
    int max_iters = 100;
    double shrink = 0.5;     ///< backtracking factor beta
    double armijo = 1e-4;    ///< sufficient-decrease constant alpha

    /// Throws DomainError unless grad_tol > 0, max_iters >= 1, 0 < shrink < 1,
    /// 0 < armijo < 0.5.
    void validate() const;
};

struct Evaluation {
    double value;
    Vector gradient;
    Matrix hessian;
};

/// Objective for Newton's method. `value` is used by the line search and
/// should be cheap; `evaluate` returns value, gradient and Hessian.
struct TwiceDifferentiable {
    std::function<double(const Vector&)> value;
    std::function<Evaluation(const Vector&)> evaluate;
};

struct NewtonResult {
    Vector theta;
    int iterations = 0;
    double grad_norm = 0.0;  ///< sup norm at the returned point
};

/// Damped Newton with Levenberg fallback and Armijo backtracking.
///
/// Direction is -H^{-1} g from a Cholesky solve. When the factorization fails
/// or the direction is not a descent direction the solve is retried with
/// H + tau I, tau starting at 1e-8 and doubling. Convergence requires both
/// ||g||_inf <= grad_tol and a Newton step no larger than
/// sqrt(grad_tol) * max(1, ||theta||_inf); the step test catches problems
/// whose infimum is only approached at infinity (separable logistic data),
/// where the gradient vanishes but the steps do not.
///
/// Throws ConvergenceError after max_iters, DomainError on a non-finite
/// objective at the starting point or at an accepted iterate.
NewtonResult newton_solve(const TwiceDifferentiable& objective, Vector theta0, const SolverSettings& settings);

inline Vector newton_minimize(const TwiceDifferentiable& objective, Vector theta0, const SolverSettings& settings) {
    return newton_solve(objective, std::move(theta0), settings).theta;
}

/// Smallest eigenvalue of the symmetric part of m.
double min_eigenvalue(const Matrix& m);

}  // namespace csl
