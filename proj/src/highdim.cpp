#include "csl/highdim.hpp"

#include <cmath>

namespace csl {

void L1Settings::validate() const {
    if (step_rule == StepRule::FixedStep && !(fixed_step > 0)) throw DomainError("fista: fixed step must be positive");
    if (!(initial_step > 0)) throw DomainError("fista: initial step must be positive");
    if (!(shrink > 0 && shrink < 1)) throw DomainError("fista: shrink must lie in (0,1)");
    if (!(tol > 0)) throw DomainError("fista: tol must be positive");
    if (max_iters < 1) throw DomainError("fista: max_iters must be at least 1");
}

Vector soft_threshold(const Vector& v, double t) {
    if (!(t >= 0)) throw DomainError("soft_threshold: threshold must be non-negative");
    Vector out(v.size());
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        const double a = std::abs(v[i]) - t;
        out[i] = a > 0 ? std::copysign(a, v[i]) : 0.0;
    }
    return out;
}

namespace {

std::vector<Eigen::Index> support_of(const Vector& theta) {
    std::vector<Eigen::Index> s;
    for (Eigen::Index i = 0; i < theta.size(); ++i) {
        if (theta[i] != 0.0) s.push_back(i);
    }
    return s;
}

double composite(double smooth, double lambda, const Vector& theta) { return smooth + lambda * theta.lpNorm<1>(); }

}  // namespace

SparseEstimate fista_l1(const SmoothObjective& f, double lambda, const Vector& theta0, const L1Settings& settings) {
    settings.validate();
    if (!(lambda >= 0) || !std::isfinite(lambda)) throw DomainError("fista: lambda must be finite and non-negative");
    if (!theta0.allFinite()) throw DomainError("fista: non-finite start");

    const double start_objective = composite(f.value(theta0), lambda, theta0);
    if (!std::isfinite(start_objective)) throw DomainError("fista: non-finite objective at start");

    Vector x = theta0;
    Vector y = theta0;
    double t = 1.0;
    double eta = settings.step_rule == StepRule::FixedStep ? settings.fixed_step : settings.initial_step;
    double f_prev = start_objective;
    bool restarted = false;
    SparseEstimate out;
    out.hit_max_iters = true;

    for (int it = 1; it <= settings.max_iters; ++it) {
        out.iterations = it;
        const ValueGradient at_y = f.value_gradient(y);
        if (!std::isfinite(at_y.value) || !at_y.gradient.allFinite()) throw DomainError("fista: non-finite objective");
        Vector x_new;
        double fx_new = 0.0;
        for (;;) {
            x_new = soft_threshold(y - eta * at_y.gradient, eta * lambda);
            fx_new = f.value(x_new);
            if (settings.step_rule == StepRule::FixedStep) break;
            const Vector diff = x_new - y;
            const double model =
                at_y.value + at_y.gradient.dot(diff) + diff.squaredNorm() / (2 * eta) + 1e-12 * std::max(1.0, std::abs(at_y.value));
            if (std::isfinite(fx_new) && fx_new <= model) break;
            eta *= settings.shrink;
            if (eta < 1e-300) throw DomainError("fista: step size underflow");
        }
        if (!std::isfinite(fx_new)) throw DomainError("fista: non-finite objective");
        const double mapping = (y - x_new).norm() / eta;
        const double f_new = composite(fx_new, lambda, x_new);
        if (mapping <= settings.tol) {
            x = std::move(x_new);
            out.hit_max_iters = false;
            break;
        }
        if (f_new > f_prev) {
            if (restarted) {
                // A plain proximal step from x failed to decrease: x is optimal to rounding.
                out.hit_max_iters = false;
                break;
            }
            // Function-value restart: drop momentum and retry from x.
            y = x;
            t = 1.0;
            restarted = true;
            continue;
        }
        restarted = false;
        const double t_new = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
        y = x_new + ((t - 1.0) / t_new) * (x_new - x);
        x = std::move(x_new);
        t = t_new;
        f_prev = f_new;
    }

    for (Eigen::Index i = 0; i < x.size(); ++i) {
        if (std::abs(x[i]) < 1e-12) x[i] = 0.0;
    }
    double final_objective = composite(f.value(x), lambda, x);
    if (!(final_objective <= start_objective)) {
        x = theta0;
        final_objective = start_objective;
    }
    out.theta = std::move(x);
    out.objective_value = final_objective;
    out.support = support_of(out.theta);
    return out;
}

SmoothObjective loss_smooth_objective(const LossModel& model, const DataShard& shard) {
    const DataShard* s = &shard;
    return {
        [model, s](const Vector& t) { return loss_value(model, t, *s); },
        [model, s](const Vector& t) { return loss_value_gradient(model, t, *s); },
    };
}

SmoothObjective surrogate_smooth_objective(const SurrogateLoss& s) {
    const SurrogateLoss* p = &s;
    return {
        [p](const Vector& t) { return p->value(t); },
        [p](const Vector& t) { return p->value_gradient(t); },
    };
}

SparseEstimate global_lasso(Cluster& cluster, double lambda, const L1Settings& settings) {
    const DataShard all = cluster.pooled();
    return fista_l1(loss_smooth_objective(cluster.model(), all), lambda, Vector::Zero(cluster.d()), settings);
}

SparseEstimate local_lasso(const Cluster& cluster, double lambda, const L1Settings& settings) {
    return fista_l1(loss_smooth_objective(cluster.model(), cluster.shard(0)), lambda, Vector::Zero(cluster.d()), settings);
}

SparseEstimate csl_lasso(Cluster& cluster, const Vector& anchor, double lambda, const L1Settings& settings) {
    const SurrogateLoss s = build_surrogate(cluster, anchor);
    return fista_l1(surrogate_smooth_objective(s), lambda, anchor, settings);
}

std::vector<SparseEstimate> iterative_csl_lasso(Cluster& cluster, const Vector& theta0, const std::vector<double>& lambdas,
                                                std::size_t rounds, const L1Settings& settings) {
    if (rounds < 1) throw DomainError("iterative_csl_lasso: at least one round is required");
    if (lambdas.empty()) throw DomainError("iterative_csl_lasso: empty lambda schedule");
    std::vector<SparseEstimate> out;
    out.reserve(rounds);
    Vector anchor = theta0;
    for (std::size_t r = 0; r < rounds; ++r) {
        const double lambda = lambdas[std::min(r, lambdas.size() - 1)];
        out.push_back(csl_lasso(cluster, anchor, lambda, settings));
        anchor = out.back().theta;
    }
    return out;
}

SparseEstimate averaging_lasso(Cluster& cluster, double lambda_local, const L1Settings& settings) {
    std::vector<int> iterations(cluster.size(), 0);
    std::vector<double> objectives(cluster.size(), 0.0);
    std::vector<char> capped(cluster.size(), 0);
    const LossModel model = cluster.model();
    const auto locals = cluster.local_map_round([&](const DataShard& shard, std::size_t j) {
        auto est = fista_l1(loss_smooth_objective(model, shard), lambda_local, Vector::Zero(shard.d()), settings);
        iterations[j] = est.iterations;
        objectives[j] = est.objective_value;
        capped[j] = est.hit_max_iters;
        return est.theta;
    });
    SparseEstimate out;
    out.theta = Vector::Zero(cluster.d());
    for (const auto& v : locals) out.theta += v;
    out.theta /= static_cast<double>(locals.size());
    out.support = support_of(out.theta);
    // No single objective exists for an average; report the mean local one.
    for (std::size_t j = 0; j < locals.size(); ++j) {
        out.objective_value += objectives[j] / static_cast<double>(locals.size());
        out.iterations = std::max(out.iterations, iterations[j]);
        out.hit_max_iters = out.hit_max_iters || capped[j];
    }
    return out;
}

double residual_scale(const DataShard& shard, const Vector& theta) {
    require_dim(theta, shard.d(), "residual_scale: parameter");
    const Vector r = shard.y() - shard.x() * theta;
    return std::sqrt(r.squaredNorm() / static_cast<double>(shard.n()));
}

double default_lambda(double sigma_hat, Eigen::Index d, Eigen::Index samples, double scale) {
    if (samples < 1) throw DomainError("default_lambda: sample count must be positive");
    const double logd = std::log(static_cast<double>(std::max<Eigen::Index>(d, 2)));
    return scale * sigma_hat * std::sqrt(logd / static_cast<double>(samples));
}

SparseEstimate self_tuned_local_lasso(const LossModel& model, const DataShard& shard, double scale, int max_passes,
                                      const L1Settings& settings) {
    const bool linear = model.family() == Family::Linear;
    double sigma = 1.0;
    if (linear) {
        const double mean = shard.y().mean();
        sigma = std::sqrt((shard.y().array() - mean).square().mean());
        if (!(sigma > 0)) sigma = 1.0;
    }
    const auto obj = loss_smooth_objective(model, shard);
    SparseEstimate est;
    Vector start = Vector::Zero(shard.d());
    for (int p = 0; p < std::max(1, max_passes); ++p) {
        est = fista_l1(obj, default_lambda(sigma, shard.d(), shard.n(), scale), start, settings);
        start = est.theta;
        if (!linear) break;
        const double next = residual_scale(shard, est.theta);
        if (!(next > 0)) break;
        const bool settled = std::abs(next - sigma) <= 1e-4 * sigma;
        sigma = next;
        if (settled) break;
    }
    return est;
}

}  // namespace csl
