#pragma once

#include <memory>
#include <vector>

#include "csl/cluster.hpp"
#include "csl/optim.hpp"

namespace csl {

/// Gradient-corrected local loss
///
///     L~(theta) = L_host(theta) - <theta, c>,   c = grad L_host(anchor) - grad L_N(anchor)
///
/// It matches the global loss L_N through first order at the anchor, up to
/// an additive constant that is dropped; compare values only through
/// differences. Immutable once built, and evaluation touches only the host
/// shard, so it never costs communication.
class SurrogateLoss {
public:
    SurrogateLoss(std::shared_ptr<const std::vector<DataShard>> shards, std::size_t host, LossModel model,
                  Vector anchor, Vector host_grad_at_anchor, Vector global_grad_at_anchor);

    const DataShard& local_shard() const { return (*shards_)[host_]; }
    std::size_t host() const { return host_; }
    const LossModel& model() const { return model_; }
    const Vector& anchor() const { return anchor_; }
    const Vector& correction() const { return correction_; }
    const Vector& global_grad_at_anchor() const { return global_grad_; }
    Eigen::Index d() const { return anchor_.size(); }

    double value(const Vector& theta) const;
    Vector gradient(const Vector& theta) const;
    ValueGradient value_gradient(const Vector& theta) const;
    Matrix hessian(const Vector& theta) const;
    /// Row i is grad loss(theta; z_i) - c for the host's sample i; the rows
    /// average to gradient(theta).
    Matrix per_sample_gradients(const Vector& theta) const;

private:
    std::shared_ptr<const std::vector<DataShard>> shards_;
    std::size_t host_;
    LossModel model_;
    Vector anchor_;
    Vector correction_;
    Vector global_grad_;
};

/// Second-order model around the anchor using the host's Hessian:
///     <g_N, theta - anchor> + 1/2 (theta - anchor)' H_host (theta - anchor)
class QuadraticSurrogate {
public:
    QuadraticSurrogate(Vector anchor, Vector global_grad, Matrix local_hessian);

    const Vector& anchor() const { return anchor_; }
    const Vector& global_grad() const { return global_grad_; }
    const Matrix& local_hessian() const { return hessian_; }

    double value(const Vector& theta) const;
    Vector gradient(const Vector& theta) const;

private:
    Vector anchor_;
    Vector global_grad_;
    Matrix hessian_;
};

/// One gradient round at `anchor`, then the surrogate hosted on worker
/// `host` (0-based; the center by default).
SurrogateLoss build_surrogate(Cluster& cluster, const Vector& anchor, std::size_t host = 0);

/// Surrogate from an already completed round at `anchor`; no communication.
SurrogateLoss surrogate_from_round(const Cluster& cluster, const Vector& anchor, const GradientRound& round,
                                   std::size_t host = 0);

struct SurrogateEvaluation {
    double value;
    Vector gradient;
    Matrix hessian;
};
SurrogateEvaluation surrogate_eval(const SurrogateLoss& s, const Vector& theta);

/// Newton-ready view of the surrogate. `s` must outlive the result.
TwiceDifferentiable surrogate_objective(const SurrogateLoss& s);

QuadraticSurrogate build_quadratic_surrogate(Cluster& cluster, const Vector& anchor, std::size_t host = 0);
QuadraticSurrogate quadratic_from_round(const Cluster& cluster, const Vector& anchor, const GradientRound& round,
                                        std::size_t host = 0);

}  // namespace csl
