#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <vector>

#include "csl/estimators.hpp"
#include "csl/surrogate.hpp"

namespace csl {

class Prior {
public:
    enum class Kind { Flat, Gaussian, UniformBox };

    static Prior flat() { return Prior(Kind::Flat, {}, {}); }
    /// Independent normals; every stddev must be positive.
    static Prior gaussian(Vector mean, Vector stddev);
    /// Uniform on the box [lower, upper]; lower < upper coordinatewise.
    static Prior uniform_box(Vector lower, Vector upper);

    Kind kind() const { return kind_; }
    /// Normalized log density; -infinity outside a box prior's support.
    double log_density(const Vector& theta) const;

private:
    Prior(Kind kind, Vector a, Vector b) : kind_(kind), a_(std::move(a)), b_(std::move(b)) {}
    Kind kind_;
    Vector a_;  // mean or lower
    Vector b_;  // stddev or upper
};

/// -N L~(theta) + log prior(theta), unnormalized. Host shard only.
double surrogate_log_posterior(const SurrogateLoss& s, const Prior& prior, const Vector& theta, Eigen::Index total_samples);

/// -N L_N(theta) + log prior(theta) with L_N the mean of the worker losses.
/// Oracle for comparisons; reads every shard.
double full_log_posterior(const Cluster& cluster, const Prior& prior, const Vector& theta);

struct Chain {
    Matrix samples;              ///< iters x d, state after each step
    std::vector<char> accepted;  ///< per step
    double proposal_scale = 0.0;
    Eigen::Index burn_in = 0;
    std::uint64_t seed = 0;

    Eigen::Index length() const { return samples.rows(); }
    double acceptance_rate() const;
    /// Samples from burn_in onward, coordinate `coord`.
    std::vector<double> kept(Eigen::Index coord) const;
    Vector posterior_mean() const;
};

using LogTarget = std::function<double(const Vector&)>;

/// Random-walk Metropolis with isotropic Gaussian proposals of scale
/// `proposal_scale`. A proposal is accepted when delta = log target(new) -
/// log target(old) >= 0, or else when log(u) < delta. Burn-in is half the
/// chain. Throws DomainError for a non-positive scale, zero iterations or a
/// non-finite starting target.
Chain metropolis(const LogTarget& log_target, const Vector& theta0, double proposal_scale, Eigen::Index iters,
                 std::uint64_t seed);

/// Two Metropolis chains on different targets driven by one random stream.
/// Proposals are maximally coupled (identical whenever the two proposal
/// densities allow it) and share the accept uniform, so chains that meet
/// move together until their targets disagree. Each chain alone is
/// distributed exactly as metropolis() with the same scale.
struct CoupledChains {
    Chain first;
    Chain second;
    /// Fraction of steps after which both chains sat at the same point.
    double met_fraction = 0.0;
};
CoupledChains coupled_metropolis(const LogTarget& first_target, const LogTarget& second_target, const Vector& theta0,
                                 double proposal_scale, Eigen::Index iters, std::uint64_t seed);

struct BayesInit {
    Initializer initializer = Initializer::Subsample;
    std::size_t ilea_rounds = 3;
    IleaMode mode = IleaMode::OneStep;
    SolverSettings solver{};
    std::optional<Vector> user{};
};

struct McmcSettings {
    Eigen::Index iters = 20000;
    /// <= 0 selects 2.4 / sqrt(d N h) with h the mean diagonal of the
    /// surrogate Hessian at the anchor.
    double proposal_scale = 0.0;
    std::uint64_t seed = 1;
};

struct BayesRun {
    Chain chain;
    Vector anchor;
    CommLedger ledger;  ///< communication spent by this run
    SurrogateLoss surrogate;
};

/// Initial estimate, ILEA refinement, one surrogate round, then Metropolis
/// on the surrogate posterior using only worker 1's data.
BayesRun run_csl_bayes(Cluster& cluster, const Prior& prior, const BayesInit& init, const McmcSettings& mcmc);

/// Default proposal scale at `anchor` for the surrogate posterior.
double default_proposal_scale(const SurrogateLoss& s, const Vector& anchor, Eigen::Index total_samples);

/// Histogram estimate of the L1 distance between the post-burn-in marginals
/// of one coordinate. Bins span the 0.5th to 99.5th percentile of the pooled
/// samples; samples outside are counted in the edge bins. Result in [0, 2].
double marginal_l1(const Chain& a, const Chain& b, Eigen::Index coord, int bins = 60);

/// Chain CSV: "iter,accepted,theta_1,...,theta_d".
void write_chain_csv(std::ostream& out, const Chain& chain);

}  // namespace csl
