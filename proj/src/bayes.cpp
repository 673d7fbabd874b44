#include "csl/bayes.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <ostream>

#include "csl/dataset_io.hpp"
#include "csl/rng.hpp"

namespace csl {

Prior Prior::gaussian(Vector mean, Vector stddev) {
    if (mean.size() != stddev.size()) throw DimensionError("gaussian prior: mean and stddev lengths differ");
    if (!(stddev.array() > 0).all()) throw DomainError("gaussian prior: stddevs must be positive");
    return Prior(Kind::Gaussian, std::move(mean), std::move(stddev));
}

Prior Prior::uniform_box(Vector lower, Vector upper) {
    if (lower.size() != upper.size()) throw DimensionError("box prior: bound lengths differ");
    if (!(lower.array() < upper.array()).all()) throw DomainError("box prior: lower must be below upper");
    return Prior(Kind::UniformBox, std::move(lower), std::move(upper));
}

double Prior::log_density(const Vector& theta) const {
    switch (kind_) {
    case Kind::Flat: return 0.0;
    case Kind::Gaussian: {
        require_dim(theta, a_.size(), "prior");
        double s = 0.0;
        for (Eigen::Index i = 0; i < theta.size(); ++i) {
            const double z = (theta[i] - a_[i]) / b_[i];
            s += -0.5 * z * z - std::log(b_[i]) - 0.5 * std::log(2 * std::numbers::pi);
        }
        return s;
    }
    case Kind::UniformBox: {
        require_dim(theta, a_.size(), "prior");
        double s = 0.0;
        for (Eigen::Index i = 0; i < theta.size(); ++i) {
            if (theta[i] < a_[i] || theta[i] > b_[i]) return -std::numeric_limits<double>::infinity();
            s -= std::log(b_[i] - a_[i]);
        }
        return s;
    }
    }
    return 0.0;
}

double surrogate_log_posterior(const SurrogateLoss& s, const Prior& prior, const Vector& theta, Eigen::Index total_samples) {
    const double lp = prior.log_density(theta);
    if (lp == -std::numeric_limits<double>::infinity()) return lp;
    return -static_cast<double>(total_samples) * s.value(theta) + lp;
}

double full_log_posterior(const Cluster& cluster, const Prior& prior, const Vector& theta) {
    const double lp = prior.log_density(theta);
    if (lp == -std::numeric_limits<double>::infinity()) return lp;
    double sum = 0.0;
    for (std::size_t j = 0; j < cluster.size(); ++j) sum += loss_value(cluster.model(), theta, cluster.shard(j));
    const double mean_loss = sum / static_cast<double>(cluster.size());
    return -static_cast<double>(cluster.total_samples()) * mean_loss + lp;
}

double Chain::acceptance_rate() const {
    if (accepted.empty()) return 0.0;
    return static_cast<double>(std::count(accepted.begin(), accepted.end(), 1)) / static_cast<double>(accepted.size());
}

std::vector<double> Chain::kept(Eigen::Index coord) const {
    std::vector<double> out;
    out.reserve(static_cast<std::size_t>(length() - burn_in));
    for (Eigen::Index t = burn_in; t < length(); ++t) out.push_back(samples(t, coord));
    return out;
}

Vector Chain::posterior_mean() const {
    return samples.bottomRows(length() - burn_in).colwise().mean().transpose();
}

Chain metropolis(const LogTarget& log_target, const Vector& theta0, double proposal_scale, Eigen::Index iters,
                 std::uint64_t seed) {
    if (!(proposal_scale > 0) || !std::isfinite(proposal_scale)) throw DomainError("metropolis: proposal scale must be positive");
    if (iters < 1) throw DomainError("metropolis: at least one iteration is required");
    double current_lp = log_target(theta0);
    if (!std::isfinite(current_lp)) throw DomainError("metropolis: log target is not finite at the starting point");

    const auto d = theta0.size();
    Chain chain;
    chain.samples.resize(iters, d);
    chain.accepted.assign(static_cast<std::size_t>(iters), 0);
    chain.proposal_scale = proposal_scale;
    chain.burn_in = iters / 2;
    chain.seed = seed;

    Rng rng(seed);
    Vector current = theta0;
    Vector proposal(d);
    for (Eigen::Index t = 0; t < iters; ++t) {
        for (Eigen::Index i = 0; i < d; ++i) proposal[i] = current[i] + proposal_scale * rng.normal();
        const double u = rng.uniform_open();
        const double lp = log_target(proposal);
        const double delta = lp - current_lp;
        // NaN delta rejects.
        if (delta >= 0 || std::log(u) < delta) {
            current = proposal;
            current_lp = lp;
            chain.accepted[static_cast<std::size_t>(t)] = 1;
        }
        chain.samples.row(t) = current.transpose();
    }
    return chain;
}

namespace {

Chain empty_chain(Eigen::Index iters, Eigen::Index d, double scale, std::uint64_t seed) {
    Chain c;
    c.samples.resize(iters, d);
    c.accepted.assign(static_cast<std::size_t>(iters), 0);
    c.proposal_scale = scale;
    c.burn_in = iters / 2;
    c.seed = seed;
    return c;
}

}  // namespace

CoupledChains coupled_metropolis(const LogTarget& first_target, const LogTarget& second_target, const Vector& theta0,
                                 double proposal_scale, Eigen::Index iters, std::uint64_t seed) {
    if (!(proposal_scale > 0) || !std::isfinite(proposal_scale)) throw DomainError("metropolis: proposal scale must be positive");
    if (iters < 1) throw DomainError("metropolis: at least one iteration is required");
    double lp_a = first_target(theta0);
    double lp_b = second_target(theta0);
    if (!std::isfinite(lp_a) || !std::isfinite(lp_b)) {
        throw DomainError("metropolis: log target is not finite at the starting point");
    }
    const auto d = theta0.size();
    CoupledChains out{empty_chain(iters, d, proposal_scale, seed), empty_chain(iters, d, proposal_scale, seed), 0.0};
    Rng rng(seed);
    Vector a = theta0;
    Vector b = theta0;
    Vector pa(d);
    Vector pb(d);
    const double inv_var = 1.0 / (proposal_scale * proposal_scale);
    // Log proposal density up to a shared constant.
    auto log_q = [&](const Vector& x, const Vector& center) { return -0.5 * inv_var * (x - center).squaredNorm(); };
    Eigen::Index met = 0;
    for (Eigen::Index t = 0; t < iters; ++t) {
        for (Eigen::Index i = 0; i < d; ++i) pa[i] = a[i] + proposal_scale * rng.normal();
        if (std::log(rng.uniform_open()) + log_q(pa, a) <= log_q(pa, b)) {
            pb = pa;
        } else {
            for (;;) {
                for (Eigen::Index i = 0; i < d; ++i) pb[i] = b[i] + proposal_scale * rng.normal();
                if (std::log(rng.uniform_open()) + log_q(pb, b) > log_q(pb, a)) break;
            }
        }
        const double log_u = std::log(rng.uniform_open());
        const double new_a = first_target(pa);
        const double new_b = second_target(pb);
        const double delta_a = new_a - lp_a;
        const double delta_b = new_b - lp_b;
        if (delta_a >= 0 || log_u < delta_a) {
            a = pa;
            lp_a = new_a;
            out.first.accepted[static_cast<std::size_t>(t)] = 1;
        }
        if (delta_b >= 0 || log_u < delta_b) {
            b = pb;
            lp_b = new_b;
            out.second.accepted[static_cast<std::size_t>(t)] = 1;
        }
        out.first.samples.row(t) = a.transpose();
        out.second.samples.row(t) = b.transpose();
        met += a == b ? 1 : 0;
    }
    out.met_fraction = static_cast<double>(met) / static_cast<double>(iters);
    return out;
}

double default_proposal_scale(const SurrogateLoss& s, const Vector& anchor, Eigen::Index total_samples) {
    const Matrix h = s.hessian(anchor);
    const double mean_diag = h.diagonal().mean();
    if (!(mean_diag > 0)) throw DomainError("proposal scale: surrogate Hessian has non-positive mean diagonal");
    return 2.4 / std::sqrt(static_cast<double>(s.d()) * static_cast<double>(total_samples) * mean_diag);
}

BayesRun run_csl_bayes(Cluster& cluster, const Prior& prior, const BayesInit& init, const McmcSettings& mcmc) {
    const CommLedger before = cluster.comm_report();
    const Vector start = initial_estimate(cluster, init.initializer, init.solver, init.user);
    const auto traj = ilea(cluster, start, init.ilea_rounds, init.mode, init.solver);
    const Vector anchor = traj.final();
    SurrogateLoss surrogate = build_surrogate(cluster, anchor);
    const Eigen::Index total = cluster.total_samples();
    const double scale = mcmc.proposal_scale > 0 ? mcmc.proposal_scale : default_proposal_scale(surrogate, anchor, total);
    const SurrogateLoss* s = &surrogate;
    Chain chain = metropolis([&](const Vector& t) { return surrogate_log_posterior(*s, prior, t, total); }, anchor, scale,
                             mcmc.iters, mcmc.seed);
    return {std::move(chain), anchor, cluster.comm_report().since(before), std::move(surrogate)};
}

namespace {

double percentile(std::vector<double> sorted_values, double q) {
    // Linear interpolation between order statistics.
    const double pos = q * static_cast<double>(sorted_values.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, sorted_values.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return sorted_values[lo] + frac * (sorted_values[hi] - sorted_values[lo]);
}

}  // namespace

double marginal_l1(const Chain& a, const Chain& b, Eigen::Index coord, int bins) {
    if (bins < 10) throw DomainError("marginal_l1: at least 10 bins are required");
    if (coord < 0 || coord >= a.samples.cols() || coord >= b.samples.cols()) throw DimensionError("marginal_l1: coordinate out of range");
    const auto xa = a.kept(coord);
    const auto xb = b.kept(coord);
    if (xa.empty() || xb.empty()) throw DomainError("marginal_l1: empty chain after burn-in");

    std::vector<double> pooled(xa);
    pooled.insert(pooled.end(), xb.begin(), xb.end());
    std::sort(pooled.begin(), pooled.end());
    const double lo = percentile(pooled, 0.005);
    const double hi = percentile(pooled, 0.995);
    const double width = hi > lo ? (hi - lo) / bins : 1.0;

    auto histogram = [&](const std::vector<double>& xs) {
        std::vector<double> h(static_cast<std::size_t>(bins), 0.0);
        for (double x : xs) {
            auto idx = static_cast<long>(std::floor((x - lo) / width));
            idx = std::clamp(idx, 0L, static_cast<long>(bins - 1));
            h[static_cast<std::size_t>(idx)] += 1.0;
        }
        for (auto& v : h) v /= static_cast<double>(xs.size());
        return h;
    };
    const auto ha = histogram(xa);
    const auto hb = histogram(xb);
    double dist = 0.0;
    for (std::size_t i = 0; i < ha.size(); ++i) dist += std::abs(ha[i] - hb[i]);
    return dist;
}

void write_chain_csv(std::ostream& out, const Chain& chain) {
    out << "iter,accepted";
    for (Eigen::Index i = 0; i < chain.samples.cols(); ++i) out << ",theta_" << (i + 1);
    out << '\n';
    for (Eigen::Index t = 0; t < chain.length(); ++t) {
        out << (t + 1) << ',' << static_cast<int>(chain.accepted[static_cast<std::size_t>(t)]);
        for (Eigen::Index i = 0; i < chain.samples.cols(); ++i) out << ',' << format_double(chain.samples(t, i));
        out << '\n';
    }
}

}  // namespace csl
