#include "csl/optim.hpp"

#include <algorithm>
#include <cmath>

namespace csl {

void SolverSettings::validate() const {
    if (!(grad_tol > 0)) throw DomainError("solver: grad_tol must be positive");
    if (max_iters < 1) throw DomainError("solver: max_iters must be at least 1");
    if (!(shrink > 0 && shrink < 1)) throw DomainError("solver: shrink factor must lie in (0,1)");
    if (!(armijo > 0 && armijo < 0.5)) throw DomainError("solver: Armijo constant must lie in (0,0.5)");
}

double min_eigenvalue(const Matrix& m) {
    const Matrix sym = 0.5 * (m + m.transpose());
    Eigen::SelfAdjointEigenSolver<Matrix> es(sym, Eigen::EigenvaluesOnly);
    return es.eigenvalues().minCoeff();
}

namespace {

Vector newton_direction(const Matrix& h, const Vector& g) {
    const Eigen::Index d = g.size();
    if (g.isZero(0.0)) return Vector::Zero(d);
    const Matrix sym = 0.5 * (h + h.transpose());
    {
        Eigen::LLT<Matrix> llt(sym);
        if (llt.info() == Eigen::Success) {
            Vector p = -llt.solve(g);
            if (p.allFinite() && g.dot(p) < 0) return p;
        }
    }
    for (double tau = 1e-8; tau < 1e20; tau *= 2.0) {
        Matrix damped = sym;
        damped.diagonal().array() += tau;
        Eigen::LLT<Matrix> llt(damped);
        if (llt.info() != Eigen::Success) continue;
        Vector p = -llt.solve(g);
        if (p.allFinite() && g.dot(p) < 0) return p;
    }
    throw ConvergenceError("newton: no descent direction found", Vector(), g.lpNorm<Eigen::Infinity>());
}

}  // namespace

NewtonResult newton_solve(const TwiceDifferentiable& objective, Vector theta, const SolverSettings& settings) {
    settings.validate();
    if (!theta.allFinite()) throw DomainError("newton: non-finite starting point");
    Evaluation ev = objective.evaluate(theta);
    if (!std::isfinite(ev.value) || !ev.gradient.allFinite() || !ev.hessian.allFinite()) {
        throw DomainError("newton: non-finite objective at starting point");
    }
    const double step_tol = std::sqrt(settings.grad_tol);
    for (int it = 0;; ++it) {
        const double gnorm = ev.gradient.lpNorm<Eigen::Infinity>();
        Vector p;
        try {
            p = newton_direction(ev.hessian, ev.gradient);
        } catch (const ConvergenceError& e) {
            throw ConvergenceError(e.what(), theta, gnorm);
        }
        const double scale = std::max(1.0, theta.lpNorm<Eigen::Infinity>());
        if (gnorm <= settings.grad_tol && p.lpNorm<Eigen::Infinity>() <= step_tol * scale) {
            return {std::move(theta), it, gnorm};
        }
        if (it >= settings.max_iters) {
            throw ConvergenceError("newton: no convergence after " + std::to_string(settings.max_iters) +
                                       " iterations (gradient sup-norm " + std::to_string(gnorm) + ")",
                                   theta, gnorm);
        }
        const double slope = ev.gradient.dot(p);
        double t = 1.0;
        bool accepted = false;
        Vector trial;
        // Predicted decrease below the rounding noise of the value: the
        // Armijo test is meaningless there, so take the full step.
        if (-slope <= 1e-12 * std::max(1.0, std::abs(ev.value))) {
            trial = theta + p;
            accepted = std::isfinite(objective.value(trial));
        }
        while (!accepted && t > 1e-16) {
            trial = theta + t * p;
            const double fv = objective.value(trial);
            if (std::isfinite(fv) && fv <= ev.value + settings.armijo * t * slope) {
                accepted = true;
                break;
            }
            t *= settings.shrink;
        }
        if (!accepted) {
            // No representable decrease left along a descent direction.
            if (gnorm <= settings.grad_tol) return {std::move(theta), it, gnorm};
            throw ConvergenceError("newton: line search failed (gradient sup-norm " + std::to_string(gnorm) + ")",
                                   theta, gnorm);
        }
        theta = std::move(trial);
        ev = objective.evaluate(theta);
        if (!std::isfinite(ev.value) || !ev.gradient.allFinite() || !ev.hessian.allFinite()) {
            throw DomainError("newton: non-finite objective at iterate");
        }
    }
}

}  // namespace csl
