#pragma once

#include "csl/cluster.hpp"
#include "csl/surrogate.hpp"

namespace csl {

enum class CovarianceKind { GlobalSandwich, LocalPlugin, CrossMachinePlugin };

/// How the covariance is assembled. InverseHessian is the negative
/// log-likelihood shortcut H^{-1}, valid when the loss is a correctly
/// specified likelihood.
enum class CovarianceForm { Sandwich, InverseHessian };

struct CovarianceEstimate {
    Matrix sigma;
    CovarianceKind kind = CovarianceKind::GlobalSandwich;
    /// Samples behind the middle term: N, n or k respectively.
    Eigen::Index n_effective = 0;
    /// Set for the cross-machine plug-in when k < 10; its middle term
    /// averages only k outer products.
    bool low_machine_count = false;
};

struct ConfidenceIntervals {
    double level = 0.95;
    Vector lower;
    Vector upper;
    Vector center;
    Eigen::Index total_samples = 0;

    bool covers(Eigen::Index i, double value) const { return lower[i] <= value && value <= upper[i]; }
};

/// H^{-1} V H^{-1}, computed from a factorization of H and symmetrized.
/// Throws SingularMatrixError when H is singular.
Matrix sandwich(const Matrix& h, const Matrix& v);

/// Plug-in sandwich on all N samples at theta_hat: H is the mean of the
/// worker Hessians and V the mean outer product of per-sample gradients.
/// An oracle baseline; it reads every shard and is not metered.
CovarianceEstimate sigma_global(const Cluster& cluster, const Vector& theta_hat,
                                CovarianceForm form = CovarianceForm::Sandwich);

/// Plug-in on the host shard only: H is the surrogate Hessian and V the mean
/// outer product of per-sample surrogate gradients. No communication.
CovarianceEstimate sigma_local(const SurrogateLoss& s, const Vector& theta,
                               CovarianceForm form = CovarianceForm::Sandwich);

/// Plug-in whose middle term is (n/k) sum_j g_j g_j' with g_j the local
/// gradient of machine j at theta. One gradient-vector round.
CovarianceEstimate sigma_cross(const SurrogateLoss& s, Cluster& cluster, const Vector& theta);

/// center_i +- z_{(1+level)/2} sqrt(Sigma_ii / N).
ConfidenceIntervals confidence_intervals(const Vector& center, const CovarianceEstimate& cov, Eigen::Index total_samples,
                                         double level = 0.95);

/// Standard normal quantile.
double normal_quantile(double p);
double normal_cdf(double x);

}  // namespace csl
