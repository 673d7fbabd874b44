#include <doctest.h>

#include <atomic>
#include <stdexcept>

#include "csl/cluster.hpp"
#include "helpers.hpp"

using namespace csl;
using namespace testing;

TEST_CASE("construction rules") {
    Rng rng(1);
    const auto data = logistic_shard(rng, 40, Vector::Ones(3));
    CHECK_THROWS_AS(Cluster(std::vector<DataShard>{}, LossModel::logistic()), DomainError);
    CHECK_THROWS_AS(Cluster({data.rows(0, 10), data.rows(10, 12)}, LossModel::logistic()), DomainError);
    CHECK_THROWS_AS(Cluster::partition(data, 3, LossModel::logistic()), DomainError);
    const auto c = Cluster::partition(data, 4, LossModel::logistic());
    CHECK(c.size() == 4);
    CHECK(c.n() == 10);
    CHECK(c.total_samples() == 40);
    CHECK(c.transport() == TransportKind::InProcess);
    CHECK(c.comm_report() == CommLedger{0, 0, 0, 0, 3});
}

TEST_CASE("gradient round: average, cost and determinism") {
    Rng rng(2);
    const auto data = logistic_shard(rng, 64, random_vector(rng, 3));
    const Vector theta = random_vector(rng, 3);
    auto c = Cluster::partition(data, 4, LossModel::logistic());
    const auto r = c.gradient_round(theta);
    CHECK(c.comm_report().vectors_sent == 6);
    CHECK(c.comm_report().rounds == 1);
    CHECK(c.comm_report().bits() == 64u * 3u * 6u);
    CHECK((r.global_grad - loss_gradient(LossModel::logistic(), theta, data)).lpNorm<Eigen::Infinity>() < 1e-12);
    for (std::size_t j = 0; j < 4; ++j) {
        CHECK(r.local_grads[j] == loss_gradient(LossModel::logistic(), theta, c.shard(j)));
    }
    // Ordered fold: threads never change the bits.
    auto threaded = Cluster::partition(data, 4, LossModel::logistic(), ClusterOptions{4});
    CHECK(threaded.gradient_round(theta).global_grad == r.global_grad);

    const auto vectors = c.gradient_vectors_at(theta);
    CHECK(c.comm_report().vectors_sent == 12);
    Vector mean = Vector::Zero(3);
    for (const auto& v : vectors) mean += v;
    CHECK(((mean / 4.0) - r.global_grad).lpNorm<Eigen::Infinity>() < 1e-15);
}

TEST_CASE("k = 1 crosses no boundary") {
    Rng rng(3);
    const auto data = logistic_shard(rng, 30, random_vector(rng, 2));
    auto c = Cluster::partition(data, 1, LossModel::logistic());
    const Vector theta = random_vector(rng, 2);
    CHECK(c.gradient_round(theta).global_grad == loss_gradient(LossModel::logistic(), theta, data));
    c.local_minimizer_round({});
    c.pooled();
    CHECK(c.comm_report().vectors_sent == 0);
    CHECK(c.comm_report().samples_moved == 0);
}

TEST_CASE("local minimizer round") {
    Rng rng(4);
    SUBCASE("linear shards match the normal equations") {
        const auto data = linear_shard(rng, 90, random_vector(rng, 3));
        auto c = Cluster::partition(data, 3, LossModel::linear());
        const auto mins = c.local_minimizer_round({});
        for (std::size_t j = 0; j < 3; ++j) {
            const auto& s = c.shard(j);
            const Vector oracle = (s.x().transpose() * s.x()).ldlt().solve(s.x().transpose() * s.y());
            CHECK((mins[j] - oracle).lpNorm<Eigen::Infinity>() < 1e-8);
        }
        CHECK(c.comm_report().vectors_sent == 2);
        CHECK(c.comm_report().scalars_sent == 2);
        CHECK(c.comm_report().rounds == 1);
    }
    SUBCASE("identical shards give identical minimizers") {
        const auto one = logistic_shard(rng, 50, random_vector(rng, 2));
        Cluster c({one, one, one}, LossModel::logistic());
        const auto mins = c.local_minimizer_round({});
        CHECK((mins[0] - mins[1]).norm() < 1e-10);
        CHECK((mins[0] - mins[2]).norm() < 1e-10);
    }
    SUBCASE("failure names the worker") {
        Matrix sep(4, 1);
        sep << -2, -1, 1, 2;
        DataShard bad(sep, (Vector(4) << 0, 0, 1, 1).finished());
        DataShard good(sep, (Vector(4) << 0, 1, 0, 1).finished());
        Cluster c({good, good, bad}, LossModel::logistic());
        try {
            c.local_minimizer_round({});
            FAIL("expected RoundError");
        } catch (const RoundError& e) {
            CHECK(e.worker() == 3);
        }
    }
}

TEST_CASE("pooled data movement is metered separately") {
    Rng rng(5);
    const auto data = logistic_shard(rng, 40, random_vector(rng, 2));
    auto c = Cluster::partition(data, 4, LossModel::logistic());
    const auto all = c.pooled();
    CHECK(all.x() == data.x());
    CHECK(c.comm_report().samples_moved == 30);
    CHECK(c.comm_report().vectors_sent == 0);
}

TEST_CASE("ledger snapshots") {
    Rng rng(6);
    auto c = Cluster::partition(logistic_shard(rng, 32, random_vector(rng, 2)), 8, LossModel::logistic());
    const auto a = c.comm_report();
    CHECK(a == c.comm_report());
    c.gradient_round(Vector::Zero(2));
    c.gradient_round(Vector::Zero(2));
    const auto diff = c.comm_report().since(a);
    CHECK(diff.vectors_sent == 28);
    CHECK(diff.rounds == 2);
}

TEST_CASE("local map round") {
    Rng rng(7);
    auto c = Cluster::partition(logistic_shard(rng, 20, random_vector(rng, 2)), 5, LossModel::logistic());
    const auto out = c.local_map_round([](const DataShard& s, std::size_t j) {
        return Vector::Constant(s.d(), static_cast<double>(j));
    });
    CHECK(out.size() == 5);
    CHECK(out[4][1] == 4.0);
    CHECK(c.comm_report().vectors_sent == 4);
}

TEST_CASE("parallel_for runs everything and rethrows the lowest index") {
    std::atomic<int> sum{0};
    parallel_for(100, 4, [&](std::size_t i) { sum += static_cast<int>(i); });
    CHECK(sum == 4950);
    try {
        parallel_for(10, 3, [](std::size_t i) {
            if (i == 7 || i == 4) throw std::runtime_error(std::to_string(i));
        });
        FAIL("expected an exception");
    } catch (const std::runtime_error& e) {
        CHECK(std::string(e.what()) == "4");
    }
}

TEST_CASE("concatenate restores the partitioned data") {
    Rng rng(8);
    const auto data = linear_shard(rng, 12, random_vector(rng, 2));
    const auto back = concatenate(split(data, 3));
    CHECK(back.x() == data.x());
    CHECK(back.y() == data.y());
}
