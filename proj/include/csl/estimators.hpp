#pragma once

#include <optional>
#include <vector>

#include "csl/surrogate.hpp"

namespace csl {

enum class IleaMode {
    ExactSurrogate,  ///< theta(t+1) = argmin of the surrogate
    OneStep,         ///< theta(t+1) = theta(t) - H_1(theta(t))^{-1} grad L_N(theta(t))
};

struct IleaTrajectory {
    IleaMode mode = IleaMode::OneStep;
    std::vector<Vector> iterates;  ///< theta(0) .. theta(T)
    /// ||theta(t) - reference||_2 for each iterate when a reference was given.
    std::vector<double> distance_to_reference;
    CommLedger ledger_before;
    CommLedger ledger_after;
    /// Surrogate built in the last round (anchor theta(T-1)); empty when T = 0.
    std::optional<SurrogateLoss> last_surrogate;

    const Vector& final() const { return iterates.back(); }
    std::size_t rounds() const { return iterates.size() - 1; }
};

/// argmin of the surrogate by Newton starting at theta0. No communication.
Vector minimize_surrogate(const SurrogateLoss& s, const Vector& theta0, const SolverSettings& settings = {});

/// Closed-form minimizer anchor - H^{-1} g of the quadratic surrogate.
/// Throws SingularMatrixError when the symmetrized Hessian's smallest
/// eigenvalue is <= 1e-10.
Vector one_step_update(const QuadraticSurrogate& q);

/// Iterative local estimation: T rounds of (gradient round, local update).
/// Each round costs 2(k-1) vectors. Inner failures are rethrown as
/// IterationError (1-based round index) with the cause nested.
IleaTrajectory ilea(Cluster& cluster, const Vector& theta0, std::size_t rounds, IleaMode mode,
                    const SolverSettings& settings = {}, const std::optional<Vector>& reference = std::nullopt);

/// Mean of the k local minimizers; costs one local-minimizer round.
Vector averaging_estimator(Cluster& cluster, const SolverSettings& settings = {});

/// Minimizer of worker 1's loss, computed on the center without communication.
Vector subsample_estimator(const Cluster& cluster, const SolverSettings& settings = {});

/// Minimizer of the pooled loss. Ships all data to the center, which the
/// ledger records under samples_moved.
Vector global_estimator(Cluster& cluster, const SolverSettings& settings = {});

struct Baselines {
    Vector global;
    Vector subsample;
    Vector averaging;
};
Baselines baseline_suite(Cluster& cluster, const SolverSettings& settings = {});

enum class Initializer { Averaging, Subsample, User };

/// Starting point for ILEA. Averaging costs one local-minimizer round;
/// Subsample is free; User returns `user` unchanged.
Vector initial_estimate(Cluster& cluster, Initializer kind, const SolverSettings& settings = {},
                        const std::optional<Vector>& user = std::nullopt);

}  // namespace csl
