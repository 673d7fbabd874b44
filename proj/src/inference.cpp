#include "csl/inference.hpp"

#include <cmath>
#include <numbers>

#include "csl/optim.hpp"

namespace csl {

namespace {

Eigen::LDLT<Matrix> factorize(const Matrix& h, const char* what) {
    if (h.rows() != h.cols()) throw DimensionError(std::string(what) + ": matrix is not square");
    const Matrix sym = 0.5 * (h + h.transpose());
    Eigen::SelfAdjointEigenSolver<Matrix> es(sym, Eigen::EigenvaluesOnly);
    const auto& ev = es.eigenvalues();
    const double scale = std::max(1.0, ev.cwiseAbs().maxCoeff());
    if (!(ev.cwiseAbs().minCoeff() > 1e-12 * scale)) {
        throw SingularMatrixError(std::string(what) + ": singular Hessian", ev.minCoeff());
    }
    return Eigen::LDLT<Matrix>(sym);
}

Matrix symmetrized(const Matrix& m) { return 0.5 * (m + m.transpose()); }

Matrix inverse_of(const Matrix& h, const char* what) {
    auto ldlt = factorize(h, what);
    return symmetrized(ldlt.solve(Matrix::Identity(h.rows(), h.cols())));
}

}  // namespace

Matrix sandwich(const Matrix& h, const Matrix& v) {
    if (v.rows() != h.rows() || v.cols() != h.cols()) throw DimensionError("sandwich: shape mismatch");
    auto ldlt = factorize(h, "sandwich");
    const Matrix left = ldlt.solve(v);                           // H^{-1} V
    const Matrix full = ldlt.solve(Matrix(left.transpose()));    // H^{-1} V H^{-1}
    return symmetrized(full);
}

CovarianceEstimate sigma_global(const Cluster& cluster, const Vector& theta_hat, CovarianceForm form) {
    require_dim(theta_hat, cluster.d(), "sigma_global: parameter");
    const auto d = cluster.d();
    Matrix h = Matrix::Zero(d, d);
    Matrix v = Matrix::Zero(d, d);
    for (std::size_t j = 0; j < cluster.size(); ++j) {
        h += loss_hessian(cluster.model(), theta_hat, cluster.shard(j));
        if (form == CovarianceForm::Sandwich) {
            const Matrix g = per_sample_gradients(cluster.model(), theta_hat, cluster.shard(j));
            v.noalias() += g.transpose() * g;
        }
    }
    h /= static_cast<double>(cluster.size());
    CovarianceEstimate out;
    out.kind = CovarianceKind::GlobalSandwich;
    out.n_effective = cluster.total_samples();
    if (form == CovarianceForm::InverseHessian) {
        out.sigma = inverse_of(h, "sigma_global");
    } else {
        v /= static_cast<double>(cluster.total_samples());
        out.sigma = sandwich(h, symmetrized(v));
    }
    return out;
}

CovarianceEstimate sigma_local(const SurrogateLoss& s, const Vector& theta, CovarianceForm form) {
    require_dim(theta, s.d(), "sigma_local: parameter");
    const Matrix h = s.hessian(theta);
    CovarianceEstimate out;
    out.kind = CovarianceKind::LocalPlugin;
    out.n_effective = s.local_shard().n();
    if (form == CovarianceForm::InverseHessian) {
        out.sigma = inverse_of(h, "sigma_local");
        return out;
    }
    const Matrix g = s.per_sample_gradients(theta);
    Matrix v = g.transpose() * g;
    v /= static_cast<double>(g.rows());
    out.sigma = sandwich(h, symmetrized(v));
    return out;
}

CovarianceEstimate sigma_cross(const SurrogateLoss& s, Cluster& cluster, const Vector& theta) {
    require_dim(theta, s.d(), "sigma_cross: parameter");
    const auto grads = cluster.gradient_vectors_at(theta);
    const auto d = s.d();
    Matrix v = Matrix::Zero(d, d);
    for (const auto& g : grads) v.noalias() += g * g.transpose();
    const double k = static_cast<double>(grads.size());
    v *= static_cast<double>(cluster.n()) / k;
    CovarianceEstimate out;
    out.kind = CovarianceKind::CrossMachinePlugin;
    out.n_effective = static_cast<Eigen::Index>(grads.size());
    out.low_machine_count = grads.size() < 10;
    out.sigma = sandwich(s.hessian(theta), symmetrized(v));
    return out;
}

ConfidenceIntervals confidence_intervals(const Vector& center, const CovarianceEstimate& cov, Eigen::Index total_samples,
                                         double level) {
    if (!(level > 0 && level < 1)) throw DomainError("confidence level must lie in (0,1)");
    if (total_samples < 1) throw DomainError("confidence intervals: sample count must be positive");
    require_dim(center, cov.sigma.rows(), "confidence intervals: center");
    const double z = normal_quantile(0.5 * (1.0 + level));
    ConfidenceIntervals ci;
    ci.level = level;
    ci.center = center;
    ci.total_samples = total_samples;
    ci.lower.resize(center.size());
    ci.upper.resize(center.size());
    for (Eigen::Index i = 0; i < center.size(); ++i) {
        const double var = cov.sigma(i, i);
        if (!(var >= 0)) throw DomainError("confidence intervals: negative variance at coordinate " + std::to_string(i + 1));
        const double half = z * std::sqrt(var / static_cast<double>(total_samples));
        ci.lower[i] = center[i] - half;
        ci.upper[i] = center[i] + half;
    }
    return ci;
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

// Acklam's rational approximation (relative error < 1.15e-9) followed by one
// Halley step against erfc, which brings the result to near machine precision.
double normal_quantile(double p) {
    if (!(p > 0 && p < 1)) throw DomainError("normal quantile: probability must lie in (0,1)");
    static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
                                   1.383577518672690e+02,  -3.066479806614716e+01, 2.506628277459239e+00};
    static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
                                   6.680131188771972e+01,  -1.328068155288572e+01};
    static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
                                   -2.549732539343734e+00, 4.374664141464968e+00,  2.938163982698783e+00};
    static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
                                   3.754408661907416e+00};
    constexpr double p_low = 0.02425;
    double x;
    if (p < p_low) {
        const double q = std::sqrt(-2 * std::log(p));
        x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1);
    } else if (p <= 1 - p_low) {
        const double q = p - 0.5;
        const double r = q * q;
        x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
            (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1);
    } else {
        const double q = std::sqrt(-2 * std::log1p(-p));
        x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1);
    }
    const double e = normal_cdf(x) - p;
    const double u = e * std::sqrt(2 * std::numbers::pi) * std::exp(0.5 * x * x);
    return x - u / (1 + 0.5 * x * u);
}

}  // namespace csl
