#include <doctest.h>

#include <thread>

#include "csl/dataset_io.hpp"
#include "csl/estimators.hpp"
#include "csl/tcp.hpp"
#include "helpers.hpp"

using namespace csl;
using namespace testing;

TEST_CASE("frame encoding") {
    const std::string f = wire::encode_frame(wire::Opcode::EvalGrad, "abc");
    CHECK(f.size() == wire::kHeaderSize + 3);
    CHECK(static_cast<unsigned char>(f[0]) == 0x02);
    CHECK(static_cast<unsigned char>(f[1]) == 3);  // little-endian length
    CHECK(f[2] == 0);
    std::size_t used = 0;
    CHECK_FALSE(wire::decode_frame(f.substr(0, 6), used).has_value());
    const auto back = wire::decode_frame(f + "tail", used);
    REQUIRE(back.has_value());
    CHECK(used == f.size());
    CHECK(back->is(wire::Opcode::EvalGrad));
    CHECK(back->payload == "abc");
    CHECK(wire::known_opcode(0x06));
    CHECK_FALSE(wire::known_opcode(0x42));
}

TEST_CASE("reals are little-endian doubles") {
    const Vector v = (Vector(3) << 1.5, -0.0, 1e-300).finished();
    const std::string bytes = wire::encode_reals(v);
    CHECK(bytes.size() == 24);
    CHECK(static_cast<unsigned char>(bytes[7]) == 0x3F);  // 1.5 = 0x3FF8000000000000
    CHECK(static_cast<unsigned char>(bytes[6]) == 0xF8);
    CHECK(wire::decode_reals(bytes, 3) == v);
    CHECK_THROWS_AS(wire::decode_reals(bytes, 2), DomainError);
    CHECK(wire::decode_real(wire::encode_real(0.25)) == 0.25);
}

TEST_CASE("worker session state machine") {
    Rng rng(1);
    const auto shard = logistic_shard(rng, 20, random_vector(rng, 2));
    WorkerSession w(LossModel::logistic());
    // Gradient before a shard is loaded is an error and closes the session.
    {
        WorkerSession early(LossModel::logistic());
        const auto r = early.handle({0x02, wire::encode_reals(Vector::Zero(2))});
        REQUIRE(r.has_value());
        CHECK(r->is(wire::Opcode::Error));
        CHECK(early.closed());
    }
    CHECK_FALSE(w.handle({0x01, dataset_to_csv(shard)}).has_value());
    CHECK(w.loaded());
    const Vector theta = random_vector(rng, 2);
    auto r = w.handle({0x02, wire::encode_reals(theta)});
    REQUIRE(r.has_value());
    CHECK(r->is(wire::Opcode::GradReply));
    CHECK(wire::decode_reals(r->payload, 2) == loss_gradient(LossModel::logistic(), theta, shard));
    r = w.handle({0x04, wire::encode_real(1e-10)});
    REQUIRE(r.has_value());
    CHECK(r->is(wire::Opcode::LocalMinReply));
    SolverSettings s;
    s.grad_tol = 1e-10;
    CHECK(wire::decode_reals(r->payload, 2) == local_minimizer(LossModel::logistic(), shard, s));
    // Wrong length payload
    r = w.handle({0x02, "xyz"});
    CHECK(r->is(wire::Opcode::Error));
    CHECK(w.closed());

    WorkerSession u(LossModel::logistic());
    r = u.handle({0x42, ""});
    REQUIRE(r.has_value());
    CHECK(r->is(wire::Opcode::Error));
    CHECK(u.closed());

    WorkerSession v(LossModel::logistic());
    CHECK_FALSE(v.handle({0x06, ""}).has_value());
    CHECK(v.closed());
}

TEST_CASE("TCP cluster matches the in-process cluster bit for bit") {
    Rng rng(2);
    const auto data = logistic_shard(rng, 120, random_vector(rng, 3));
    const auto shards = split(data, 3);

    std::vector<std::unique_ptr<WorkerServer>> servers;
    std::vector<std::thread> threads;
    std::vector<std::string> addresses;
    for (int j = 0; j < 2; ++j) {
        servers.push_back(std::make_unique<WorkerServer>(LossModel::logistic()));
        addresses.push_back("127.0.0.1:" + std::to_string(servers.back()->port()));
        threads.emplace_back([s = servers.back().get()] { s->serve(); });
    }
    {
        auto remote = Cluster::connect_tcp(shards, LossModel::logistic(), addresses);
        Cluster local(shards, LossModel::logistic());
        CHECK(remote.transport() == TransportKind::Tcp);
        const Vector a = averaging_estimator(remote);
        const Vector b = averaging_estimator(local);
        CHECK(a == b);
        const auto ra = ilea(remote, a, 2, IleaMode::OneStep);
        const auto rb = ilea(local, b, 2, IleaMode::OneStep);
        CHECK(ra.final() == rb.final());
        CHECK(remote.comm_report() == local.comm_report());
    }
    for (auto& t : threads) t.join();
}

TEST_CASE("a failing remote worker surfaces as a round error naming it") {
    Rng rng(3);
    const auto good = logistic_shard(rng, 40, 0.3 * random_vector(rng, 2));
    // Worker 2 gets separable data, so its local solve fails.
    Matrix sep(40, 2);
    Vector y(40);
    for (int i = 0; i < 40; ++i) {
        sep(i, 0) = i < 20 ? -1.0 - i : 1.0 + i;
        sep(i, 1) = 0.1 * i;
        y[i] = i < 20 ? 0 : 1;
    }
    WorkerServer server(LossModel::logistic());
    std::thread t([&] { server.serve(); });
    {
        auto c = Cluster::connect_tcp({good, DataShard(sep, y)}, LossModel::logistic(),
                                      {"127.0.0.1:" + std::to_string(server.port())});
        try {
            c.local_minimizer_round({});
            FAIL("expected RoundError");
        } catch (const RoundError& e) {
            CHECK(e.worker() == 2);
        }
    }
    // The worker dropped that connection; shut it down through a fresh one.
    {
        auto c = Cluster::connect_tcp({good, good}, LossModel::logistic(), {"127.0.0.1:" + std::to_string(server.port())});
        c.gradient_round(Vector::Zero(2));
    }
    t.join();
}

TEST_CASE("connect_tcp validates the address list") {
    Rng rng(4);
    const auto s = logistic_shard(rng, 10, random_vector(rng, 2));
    CHECK_THROWS(Cluster::connect_tcp({s, s, s}, LossModel::logistic(), {"127.0.0.1:1"}));
    CHECK_THROWS(Cluster::connect_tcp({s, s}, LossModel::logistic(), {"not-an-address"}));
}
