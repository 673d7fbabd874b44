#pragma once

#include <functional>
#include <vector>

#include "csl/cluster.hpp"
#include "csl/surrogate.hpp"

namespace csl {

enum class StepRule { FixedStep, BacktrackingLipschitz };

struct L1Settings {
    StepRule step_rule = StepRule::BacktrackingLipschitz;
    double fixed_step = 0.1;     ///< eta when step_rule is FixedStep
    double initial_step = 1.0;   ///< first trial step for backtracking
    double shrink = 0.5;
    /// Stop once the proximal-gradient mapping ||(y - x+)/eta||_2 drops below tol.
    double tol = 1e-8;
    int max_iters = 20000;

    void validate() const;
};

/// Smooth part f of a composite objective f + lambda ||.||_1.
struct SmoothObjective {
    std::function<double(const Vector&)> value;
    std::function<ValueGradient(const Vector&)> value_gradient;
};

struct SparseEstimate {
    Vector theta;
    std::vector<Eigen::Index> support;  ///< indices with theta_i != 0, ascending
    double objective_value = 0.0;       ///< f(theta) + lambda ||theta||_1
    int iterations = 0;
    bool hit_max_iters = false;
};

/// sign(v_i) max(|v_i| - t, 0).
Vector soft_threshold(const Vector& v, double t);

/// FISTA with backtracking and function-value restart for
/// min f(theta) + lambda ||theta||_1. Entries below 1e-12 in magnitude are
/// snapped to zero at the end. The returned objective never exceeds the
/// objective at theta0. Throws DomainError for a non-finite objective; running
/// out of iterations is reported in the result instead.
SparseEstimate fista_l1(const SmoothObjective& f, double lambda, const Vector& theta0, const L1Settings& settings = {});

SmoothObjective loss_smooth_objective(const LossModel& model, const DataShard& shard);
SmoothObjective surrogate_smooth_objective(const SurrogateLoss& s);

/// Lasso on the pooled loss; ships all data to the center.
SparseEstimate global_lasso(Cluster& cluster, double lambda, const L1Settings& settings = {});

/// Lasso on worker 1's data alone; no communication.
SparseEstimate local_lasso(const Cluster& cluster, double lambda, const L1Settings& settings = {});

/// argmin L~(theta) + lambda ||theta||_1 with the surrogate anchored at
/// `anchor`. One gradient round, 2(k-1) vectors. Starts FISTA at the anchor.
SparseEstimate csl_lasso(Cluster& cluster, const Vector& anchor, double lambda, const L1Settings& settings = {});

/// Repeats csl_lasso `rounds` times, re-anchoring at the previous estimate.
/// Round t uses lambdas[min(t, lambdas.size() - 1)].
std::vector<SparseEstimate> iterative_csl_lasso(Cluster& cluster, const Vector& theta0, const std::vector<double>& lambdas,
                                                std::size_t rounds, const L1Settings& settings = {});

/// Plain mean of the k local lasso solutions; one local round, (k-1) vectors.
SparseEstimate averaging_lasso(Cluster& cluster, double lambda_local, const L1Settings& settings = {});

/// Root mean squared residual of the linear model at theta on one shard;
/// used as the noise-level estimate in the default regularization weights.
double residual_scale(const DataShard& shard, const Vector& theta);

/// Default weight scale * sigma_hat * sqrt(log d / samples).
double default_lambda(double sigma_hat, Eigen::Index d, Eigen::Index samples, double scale = 2.0);

/// Local lasso with lambda tuned from its own residuals: starting from the
/// response standard deviation, alternate (lambda from sigma_hat, fit,
/// sigma_hat from residuals) until sigma_hat moves by less than 1e-4
/// relatively, or `max_passes` fits. Non-linear models get one fit with
/// sigma_hat = 1.
SparseEstimate self_tuned_local_lasso(const LossModel& model, const DataShard& shard, double scale = 2.0,
                                      int max_passes = 50, const L1Settings& settings = {});

}  // namespace csl
