#include <doctest.h>

#include "csl/estimators.hpp"
#include "csl/inference.hpp"
#include "helpers.hpp"

using namespace csl;
using namespace testing;

TEST_CASE("sandwich product") {
    Rng rng(1);
    for (int rep = 0; rep < 20; ++rep) {
        const Eigen::Index d = 1 + static_cast<Eigen::Index>(rng.below(5));
        const Matrix h = random_spd(rng, d), v = random_spd(rng, d);
        const Matrix hi = h.inverse();
        CHECK(rel_err(sandwich(h, v), hi * v * hi) < 1e-10);
        const Matrix s = sandwich(h, v);
        CHECK((s - s.transpose()).norm() == 0.0);
    }
    CHECK((sandwich(2.0 * Matrix::Identity(3, 3), Matrix::Identity(3, 3)) - 0.25 * Matrix::Identity(3, 3)).norm() < 1e-15);
    CHECK_THROWS_AS(sandwich(Matrix::Zero(2, 2), Matrix::Identity(2, 2)), SingularMatrixError);
}

TEST_CASE("normal quantile and cdf") {
    CHECK(normal_quantile(0.975) >= 1.959963);
    CHECK(normal_quantile(0.975) <= 1.959965);
    CHECK(normal_quantile(0.5) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(normal_quantile(0.025) == doctest::Approx(-normal_quantile(0.975)));
    for (double p : {1e-6, 0.01, 0.2, 0.7, 0.95, 0.999999}) {
        CHECK(normal_cdf(normal_quantile(p)) == doctest::Approx(p).epsilon(1e-7));
    }
    CHECK(normal_cdf(0.0) == 0.5);
    CHECK_THROWS_AS(normal_quantile(0.0), DomainError);
    CHECK_THROWS_AS(normal_quantile(1.0), DomainError);
}

TEST_CASE("interval arithmetic") {
    CovarianceEstimate cov;
    cov.sigma = Matrix::Identity(2, 2);
    cov.sigma(1, 1) = 100.0;
    const auto ci = confidence_intervals(Vector::Zero(2), cov, 10000);
    CHECK((ci.upper[0] - ci.lower[0]) / 2 == doctest::Approx(0.0196).epsilon(1e-4));
    CHECK((ci.upper[1] - ci.lower[1]) / 2 == doctest::Approx(0.196).epsilon(1e-4));
    CHECK(ci.covers(0, 0.019));
    CHECK_FALSE(ci.covers(0, 0.02));
    const auto wide = confidence_intervals(Vector::Zero(2), cov, 2500);
    CHECK((wide.upper[0] - wide.lower[0]) == doctest::Approx(2.0 * (ci.upper[0] - ci.lower[0])));
    CHECK_THROWS_AS(confidence_intervals(Vector::Zero(2), cov, 100, 1.5), DomainError);
}

TEST_CASE("global plug-in on designs with known covariance") {
    Rng rng(2);
    SUBCASE("linear regression with unit noise") {
        // H = 2 E[xx'] = 2I and V = 4 sigma^2 I, so the sandwich is I.
        const auto data = linear_shard(rng, 40000, random_vector(rng, 2));
        auto cluster = Cluster::partition(data, 4, LossModel::linear());
        const Vector theta = global_estimator(cluster);
        const auto cov = sigma_global(cluster, theta);
        CHECK(cov.n_effective == 40000);
        CHECK((cov.sigma - Matrix::Identity(2, 2)).lpNorm<Eigen::Infinity>() < 0.06);
    }
    SUBCASE("intercept-only logistic at p = 1/2") {
        Matrix x = Matrix::Ones(2000, 1);
        Vector y(2000);
        for (Eigen::Index i = 0; i < 2000; ++i) y[i] = static_cast<double>(i % 2);
        Cluster cluster({DataShard(x, y)}, LossModel::logistic());
        const auto cov = sigma_global(cluster, Vector::Zero(1));
        CHECK(cov.sigma(0, 0) == doctest::Approx(4.0).epsilon(1e-12));
        const auto inv = sigma_global(cluster, Vector::Zero(1), CovarianceForm::InverseHessian);
        CHECK(inv.sigma(0, 0) == doctest::Approx(4.0).epsilon(1e-12));
    }
}

TEST_CASE("local plug-in") {
    Rng rng(3);
    const auto data = logistic_shard(rng, 600, random_vector(rng, 2));
    SUBCASE("equals the global plug-in on one machine") {
        auto cluster = Cluster::partition(data, 1, LossModel::logistic());
        const Vector theta = global_estimator(cluster);
        const auto s = build_surrogate(cluster, theta);
        const auto local = sigma_local(s, theta);
        CHECK(local.n_effective == 600);
        CHECK(local.kind == CovarianceKind::LocalPlugin);
        CHECK(rel_err(local.sigma, sigma_global(cluster, theta).sigma) < 1e-10);
    }
    SUBCASE("uses only the host shard and no communication") {
        auto cluster = Cluster::partition(data, 3, LossModel::logistic());
        const auto traj = ilea(cluster, subsample_estimator(cluster), 2, IleaMode::OneStep);
        const auto before = cluster.comm_report();
        const auto local = sigma_local(*traj.last_surrogate, traj.final());
        CHECK(cluster.comm_report() == before);
        CHECK(local.n_effective == 200);
        const auto& s = *traj.last_surrogate;
        const Matrix g = s.per_sample_gradients(traj.final());
        const Matrix v = g.transpose() * g / static_cast<double>(g.rows());
        const Matrix hi = s.hessian(traj.final()).inverse();
        CHECK(rel_err(local.sigma, hi * v * hi) < 1e-9);
    }
}

TEST_CASE("cross-machine plug-in") {
    Rng rng(4);
    const auto data = logistic_shard(rng, 12 * 50, random_vector(rng, 2));
    const auto shards = split(data, 12);
    Cluster cluster(shards, LossModel::logistic());
    const Vector theta = global_estimator(cluster);
    const auto s = build_surrogate(cluster, theta);
    const auto before = cluster.comm_report();
    const auto cross = sigma_cross(s, cluster, theta);
    CHECK(cluster.comm_report().since(before).vectors_sent == 22);
    CHECK(cross.n_effective == 12);
    CHECK_FALSE(cross.low_machine_count);
    Matrix v = Matrix::Zero(2, 2);
    for (const auto& sh : shards) {
        const Vector g = loss_gradient(LossModel::logistic(), theta, sh);
        v += g * g.transpose();
    }
    v *= 50.0 / 12.0;
    const Matrix hi = s.hessian(theta).inverse();
    CHECK(rel_err(cross.sigma, hi * v * hi) < 1e-9);

    Cluster few({shards[0], shards[1], shards[2]}, LossModel::logistic());
    const auto s3 = build_surrogate(few, theta);
    CHECK(sigma_cross(s3, few, theta).low_machine_count);
}
