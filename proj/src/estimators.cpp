#include "csl/estimators.hpp"

#include <exception>

namespace csl {

Vector minimize_surrogate(const SurrogateLoss& s, const Vector& theta0, const SolverSettings& settings) {
    require_dim(theta0, s.d(), "minimize_surrogate: start");
    return newton_minimize(surrogate_objective(s), theta0, settings);
}

Vector one_step_update(const QuadraticSurrogate& q) {
    const Matrix& h = q.local_hessian();
    const double lmin = min_eigenvalue(h);
    if (!(lmin > 1e-10)) throw SingularMatrixError("one-step update: local Hessian is not positive definite", lmin);
    Eigen::LLT<Matrix> llt(h);
    if (llt.info() != Eigen::Success) throw SingularMatrixError("one-step update: Cholesky failed", lmin);
    return q.anchor() - llt.solve(q.global_grad());
}

IleaTrajectory ilea(Cluster& cluster, const Vector& theta0, std::size_t rounds, IleaMode mode,
                    const SolverSettings& settings, const std::optional<Vector>& reference) {
    require_dim(theta0, cluster.d(), "ilea: start");
    if (!theta0.allFinite()) throw DomainError("ilea: non-finite start");
    IleaTrajectory traj;
    traj.mode = mode;
    traj.ledger_before = cluster.comm_report();
    traj.iterates.reserve(rounds + 1);
    traj.iterates.push_back(theta0);
    for (std::size_t t = 0; t < rounds; ++t) {
        const Vector current = traj.iterates.back();
        try {
            const auto round = cluster.gradient_round(current);
            auto surrogate = surrogate_from_round(cluster, current, round);
            Vector next;
            if (mode == IleaMode::ExactSurrogate) {
                next = minimize_surrogate(surrogate, current, settings);
            } else {
                next = one_step_update(quadratic_from_round(cluster, current, round));
            }
            if (!next.allFinite()) throw DomainError("non-finite iterate");
            traj.iterates.push_back(std::move(next));
            traj.last_surrogate.emplace(std::move(surrogate));
        } catch (const std::exception& e) {
            std::throw_with_nested(IterationError(t + 1, e.what()));
        }
    }
    if (reference) {
        for (const auto& it : traj.iterates) traj.distance_to_reference.push_back((it - *reference).norm());
    }
    traj.ledger_after = cluster.comm_report();
    return traj;
}

Vector averaging_estimator(Cluster& cluster, const SolverSettings& settings) {
    const auto locals = cluster.local_minimizer_round(settings);
    Vector sum = Vector::Zero(cluster.d());
    for (const auto& v : locals) sum += v;
    return sum / static_cast<double>(locals.size());
}

Vector subsample_estimator(const Cluster& cluster, const SolverSettings& settings) {
    return local_minimizer(cluster.model(), cluster.shard(0), settings);
}

Vector global_estimator(Cluster& cluster, const SolverSettings& settings) {
    const DataShard all = cluster.pooled();
    return local_minimizer(cluster.model(), all, settings);
}

Baselines baseline_suite(Cluster& cluster, const SolverSettings& settings) {
    Baselines b;
    b.global = global_estimator(cluster, settings);
    b.subsample = subsample_estimator(cluster, settings);
    b.averaging = averaging_estimator(cluster, settings);
    return b;
}

Vector initial_estimate(Cluster& cluster, Initializer kind, const SolverSettings& settings,
                        const std::optional<Vector>& user) {
    switch (kind) {
    case Initializer::Averaging: return averaging_estimator(cluster, settings);
    case Initializer::Subsample: return subsample_estimator(cluster, settings);
    case Initializer::User:
        if (!user) throw DomainError("initializer: user vector missing");
        require_dim(*user, cluster.d(), "initializer: user vector");
        return *user;
    }
    throw DomainError("initializer: unknown kind");
}

}  // namespace csl
