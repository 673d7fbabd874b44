#include <doctest.h>

#include "csl/surrogate.hpp"
#include "helpers.hpp"

using namespace csl;
using namespace testing;

namespace {

Vector mean_gradient(const LossModel& m, const Vector& theta, const std::vector<DataShard>& shards) {
    Vector g = Vector::Zero(theta.size());
    for (const auto& s : shards) g += loss_gradient(m, theta, s);
    return g / static_cast<double>(shards.size());
}

}  // namespace

TEST_CASE("surrogate gradient equals the global gradient at the anchor") {
    Rng rng(1);
    for (int rep = 0; rep < 50; ++rep) {
        const Eigen::Index d = 1 + static_cast<Eigen::Index>(rng.below(5));
        const auto data = logistic_shard(rng, 8 * 25, random_vector(rng, d));
        auto cluster = Cluster::partition(data, 8, LossModel::logistic());
        const Vector anchor = random_vector(rng, d);
        const auto s = build_surrogate(cluster, anchor);
        const Vector global = loss_gradient(LossModel::logistic(), anchor, data);
        CHECK((s.gradient(anchor) - global).lpNorm<Eigen::Infinity>() <= 1e-12 * std::max(1.0, global.norm()));
    }
}

TEST_CASE("correction matches an independent computation") {
    Rng rng(2);
    const auto data = poisson_shard(rng, 120, 0.3 * random_vector(rng, 3));
    const auto shards = split(data, 4);
    Cluster cluster(shards, LossModel::glm(Link::Poisson));
    const Vector anchor = 0.2 * random_vector(rng, 3);
    for (std::size_t host = 0; host < 4; ++host) {
        const auto s = surrogate_from_round(cluster, anchor, cluster.gradient_round(anchor), host);
        const Vector oracle = loss_gradient(LossModel::glm(Link::Poisson), anchor, shards[host]) -
                              mean_gradient(LossModel::glm(Link::Poisson), anchor, shards);
        CHECK((s.correction() - oracle).lpNorm<Eigen::Infinity>() < 1e-13);
        CHECK(s.host() == host);
        CHECK(s.local_shard().y() == shards[host].y());
    }
}

TEST_CASE("k = 1 reduces to the global loss") {
    Rng rng(3);
    const auto data = logistic_shard(rng, 80, random_vector(rng, 3));
    auto cluster = Cluster::partition(data, 1, LossModel::logistic());
    const Vector anchor = random_vector(rng, 3);
    const auto s = build_surrogate(cluster, anchor);
    CHECK(s.correction().lpNorm<Eigen::Infinity>() == 0.0);
    for (int rep = 0; rep < 10; ++rep) {
        const Vector t = random_vector(rng, 3);
        CHECK(s.value(t) == doctest::Approx(loss_value(LossModel::logistic(), t, data)).epsilon(1e-14));
        CHECK((s.gradient(t) - loss_gradient(LossModel::logistic(), t, data)).norm() < 1e-14);
    }
    CHECK(cluster.comm_report().vectors_sent == 0);
}

TEST_CASE("identical shards leave no correction") {
    Rng rng(4);
    const auto one = linear_shard(rng, 30, random_vector(rng, 2));
    Cluster cluster({one, one, one, one}, LossModel::linear());
    const auto s = build_surrogate(cluster, random_vector(rng, 2));
    CHECK(s.correction().lpNorm<Eigen::Infinity>() < 1e-14);
}

TEST_CASE("derivatives agree with finite differences") {
    Rng rng(5);
    for (int rep = 0; rep < 20; ++rep) {
        const auto data = logistic_shard(rng, 4 * 30, random_vector(rng, 3));
        auto cluster = Cluster::partition(data, 4, LossModel::logistic());
        const auto s = build_surrogate(cluster, random_vector(rng, 3));
        const Vector t = random_vector(rng, 3);
        CHECK(rel_err(s.gradient(t), fd_gradient([&](const Vector& v) { return s.value(v); }, t)) < 1e-6);
        CHECK(rel_err(s.hessian(t), fd_jacobian([&](const Vector& v) { return s.gradient(v); }, t)) < 1e-6);
        const auto vg = s.value_gradient(t);
        CHECK(vg.value == doctest::Approx(s.value(t)).epsilon(1e-14));
        CHECK((vg.gradient - s.gradient(t)).norm() < 1e-14);
        const auto ev = surrogate_eval(s, t);
        CHECK(ev.hessian == s.hessian(t));
        CHECK((s.per_sample_gradients(t).colwise().mean().transpose() - s.gradient(t)).norm() < 1e-13);
    }
}

TEST_CASE("value differences follow the defining formula") {
    Rng rng(6);
    const auto data = logistic_shard(rng, 90, random_vector(rng, 2));
    const auto shards = split(data, 3);
    Cluster cluster(shards, LossModel::logistic());
    const Vector anchor = random_vector(rng, 2);
    const auto s = build_surrogate(cluster, anchor);
    const Vector a = random_vector(rng, 2), b = random_vector(rng, 2);
    const double oracle = logistic_loss_oracle(a, shards[0]) - logistic_loss_oracle(b, shards[0]) -
                          (a - b).dot(s.correction());
    CHECK(s.value(a) - s.value(b) == doctest::Approx(oracle).epsilon(1e-12));
}

TEST_CASE("surrogate tracks the global loss to second order near the anchor") {
    Rng rng(7);
    const auto data = logistic_shard(rng, 400, random_vector(rng, 3));
    auto cluster = Cluster::partition(data, 4, LossModel::logistic());
    const Vector anchor = random_vector(rng, 3);
    const auto s = build_surrogate(cluster, anchor);
    const Vector dir = random_vector(rng, 3).normalized();
    auto gap = [&](double h) {
        const Vector t = anchor + h * dir;
        return (s.value(t) - s.value(anchor)) -
               (loss_value(LossModel::logistic(), t, data) - loss_value(LossModel::logistic(), anchor, data));
    };
    // The first-order terms cancel, so halving h quarters the gap.
    const double r = gap(1e-2) / gap(5e-3);
    CHECK(r == doctest::Approx(4.0).epsilon(0.05));
}

TEST_CASE("evaluation is local") {
    Rng rng(8);
    auto cluster = Cluster::partition(logistic_shard(rng, 60, random_vector(rng, 2)), 3, LossModel::logistic());
    const auto s = build_surrogate(cluster, Vector::Zero(2));
    const auto before = cluster.comm_report();
    CHECK(before.vectors_sent == 4);
    for (int i = 0; i < 5; ++i) (void)surrogate_eval(s, random_vector(rng, 2));
    (void)surrogate_objective(s).evaluate(Vector::Ones(2));
    CHECK(cluster.comm_report() == before);
}

TEST_CASE("quadratic surrogate") {
    Rng rng(9);
    const auto data = logistic_shard(rng, 90, random_vector(rng, 3));
    const auto shards = split(data, 3);
    Cluster cluster(shards, LossModel::logistic());
    const Vector anchor = random_vector(rng, 3);
    const auto q = build_quadratic_surrogate(cluster, anchor);
    CHECK(q.value(anchor) == 0.0);
    CHECK((q.gradient(anchor) - loss_gradient(LossModel::logistic(), anchor, data)).norm() < 1e-13);
    CHECK((q.local_hessian() - loss_hessian(LossModel::logistic(), anchor, shards[0])).norm() < 1e-13);
    const Vector t = random_vector(rng, 3);
    const Vector delta = t - anchor;
    CHECK(q.value(t) == doctest::Approx(q.global_grad().dot(delta) + 0.5 * delta.dot(q.local_hessian() * delta)));
    CHECK((q.gradient(t) - (q.global_grad() + q.local_hessian() * delta)).norm() < 1e-13);
    CHECK(cluster.comm_report().vectors_sent == 4);
    CHECK_THROWS_AS(QuadraticSurrogate(anchor, Vector::Zero(2), Matrix::Identity(3, 3)), DimensionError);
}
