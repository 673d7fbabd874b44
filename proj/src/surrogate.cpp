#include "csl/surrogate.hpp"

namespace csl {

SurrogateLoss::SurrogateLoss(std::shared_ptr<const std::vector<DataShard>> shards, std::size_t host, LossModel model,
                             Vector anchor, Vector host_grad_at_anchor, Vector global_grad_at_anchor)
    : shards_(std::move(shards)), host_(host), model_(model), anchor_(std::move(anchor)),
      global_grad_(std::move(global_grad_at_anchor)) {
    if (host_ >= shards_->size()) throw DomainError("surrogate: host index out of range");
    const auto d = local_shard().d();
    require_dim(anchor_, d, "surrogate: anchor");
    require_dim(host_grad_at_anchor, d, "surrogate: local gradient");
    require_dim(global_grad_, d, "surrogate: global gradient");
    correction_ = host_grad_at_anchor - global_grad_;
    if (!anchor_.allFinite() || !correction_.allFinite()) throw DomainError("surrogate: non-finite anchor data");
}

double SurrogateLoss::value(const Vector& theta) const {
    return loss_value(model_, theta, local_shard()) - theta.dot(correction_);
}

Vector SurrogateLoss::gradient(const Vector& theta) const {
    return loss_gradient(model_, theta, local_shard()) - correction_;
}

ValueGradient SurrogateLoss::value_gradient(const Vector& theta) const {
    auto vg = loss_value_gradient(model_, theta, local_shard());
    vg.value -= theta.dot(correction_);
    vg.gradient -= correction_;
    return vg;
}

Matrix SurrogateLoss::hessian(const Vector& theta) const { return loss_hessian(model_, theta, local_shard()); }

Matrix SurrogateLoss::per_sample_gradients(const Vector& theta) const {
    Matrix g = csl::per_sample_gradients(model_, theta, local_shard());
    g.rowwise() -= correction_.transpose();
    return g;
}

QuadraticSurrogate::QuadraticSurrogate(Vector anchor, Vector global_grad, Matrix local_hessian)
    : anchor_(std::move(anchor)), global_grad_(std::move(global_grad)), hessian_(std::move(local_hessian)) {
    require_dim(global_grad_, anchor_.size(), "quadratic surrogate: gradient");
    if (hessian_.rows() != anchor_.size() || hessian_.cols() != anchor_.size()) {
        throw DimensionError("quadratic surrogate: Hessian shape");
    }
    hessian_ = 0.5 * (hessian_ + hessian_.transpose()).eval();
}

double QuadraticSurrogate::value(const Vector& theta) const {
    const Vector delta = theta - anchor_;
    return global_grad_.dot(delta) + 0.5 * delta.dot(hessian_ * delta);
}

Vector QuadraticSurrogate::gradient(const Vector& theta) const { return global_grad_ + hessian_ * (theta - anchor_); }

SurrogateLoss surrogate_from_round(const Cluster& cluster, const Vector& anchor, const GradientRound& round,
                                   std::size_t host) {
    if (host >= cluster.size()) throw DomainError("surrogate: host index out of range");
    return SurrogateLoss(cluster.shards(), host, cluster.model(), anchor, round.local_grads[host], round.global_grad);
}

SurrogateLoss build_surrogate(Cluster& cluster, const Vector& anchor, std::size_t host) {
    if (host >= cluster.size()) throw DomainError("surrogate: host index out of range");
    const auto round = cluster.gradient_round(anchor);
    return surrogate_from_round(cluster, anchor, round, host);
}

SurrogateEvaluation surrogate_eval(const SurrogateLoss& s, const Vector& theta) {
    auto vg = s.value_gradient(theta);
    return {vg.value, std::move(vg.gradient), s.hessian(theta)};
}

TwiceDifferentiable surrogate_objective(const SurrogateLoss& s) {
    const SurrogateLoss* p = &s;
    return {
        [p](const Vector& t) { return p->value(t); },
        [p](const Vector& t) {
            auto e = surrogate_eval(*p, t);
            return Evaluation{e.value, std::move(e.gradient), std::move(e.hessian)};
        },
    };
}

QuadraticSurrogate quadratic_from_round(const Cluster& cluster, const Vector& anchor, const GradientRound& round,
                                        std::size_t host) {
    if (host >= cluster.size()) throw DomainError("surrogate: host index out of range");
    return QuadraticSurrogate(anchor, round.global_grad, loss_hessian(cluster.model(), anchor, cluster.shard(host)));
}

QuadraticSurrogate build_quadratic_surrogate(Cluster& cluster, const Vector& anchor, std::size_t host) {
    if (host >= cluster.size()) throw DomainError("surrogate: host index out of range");
    const auto round = cluster.gradient_round(anchor);
    return quadratic_from_round(cluster, anchor, round, host);
}

}  // namespace csl
