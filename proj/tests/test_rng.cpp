#include <doctest.h>

#include <cmath>
#include <set>
#include <vector>

#include "csl/rng.hpp"

using namespace csl;

namespace {

// Reference xoshiro256** step, transcribed from the published algorithm.
struct RefXoshiro {
    std::uint64_t s[4];
    static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
    std::uint64_t next() {
        const std::uint64_t result = rotl(s[1] * 5, 7) * 9;
        const std::uint64_t t = s[1] << 17;
        s[2] ^= s[0];
        s[3] ^= s[1];
        s[1] ^= s[2];
        s[0] ^= s[3];
        s[2] ^= t;
        s[3] = rotl(s[3], 45);
        return result;
    }
};

}  // namespace

TEST_CASE("splitmix64 reference outputs") {
    std::uint64_t state = 0;
    CHECK(splitmix64(state) == 0xe220a8397b1dcdafULL);
    CHECK(splitmix64(state) == 0x6e789e6aa1b965f4ULL);
}

TEST_CASE("fnv1a64 reference values") {
    CHECK(fnv1a64("") == 0xcbf29ce484222325ULL);
    CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cULL);
}

TEST_CASE("generator follows xoshiro256** seeded by splitmix64") {
    std::uint64_t sm = 42;
    RefXoshiro ref{{splitmix64(sm), splitmix64(sm), splitmix64(sm), splitmix64(sm)}};
    Rng rng(42);
    for (int i = 0; i < 1000; ++i) REQUIRE(rng.next_u64() == ref.next());
}

TEST_CASE("same seed, same stream; derived seeds separate streams") {
    Rng a(7), b(7);
    for (int i = 0; i < 100; ++i) CHECK(a.normal() == b.normal());

    std::set<std::uint64_t> seeds;
    for (std::uint64_t trial = 0; trial < 50; ++trial) {
        seeds.insert(derive_seed(1, trial, "data"));
        seeds.insert(derive_seed(1, trial, "mcmc"));
        seeds.insert(derive_seed(2, trial, "data"));
    }
    CHECK(seeds.size() == 150);
    CHECK(derive_seed(9, 3, "x") == derive_seed(9, 3, "x"));
}

TEST_CASE("uniform ranges and bounded integers") {
    Rng rng(3);
    std::vector<int> counts(7, 0);
    for (int i = 0; i < 70000; ++i) {
        const double u = rng.uniform();
        REQUIRE(u >= 0.0);
        REQUIRE(u < 1.0);
        const double v = rng.uniform_open();
        REQUIRE(v > 0.0);
        REQUIRE(v < 1.0);
        const auto b = rng.below(7);
        REQUIRE(b < 7);
        counts[b]++;
    }
    // Each count ~ Binomial(70000, 1/7): sd ~ 92.6, allow 5 sd.
    for (int c : counts) CHECK(std::abs(c - 10000) < 463);
}

TEST_CASE("normal moments") {
    Rng rng(11);
    const int m = 200000;
    double s1 = 0, s2 = 0, s4 = 0;
    for (int i = 0; i < m; ++i) {
        const double z = rng.normal();
        s1 += z;
        s2 += z * z;
        s4 += z * z * z * z;
    }
    // Standard errors: mean 1/sqrt(m), variance sqrt(2/m), fourth moment sqrt(96/m).
    CHECK(std::abs(s1 / m) < 5 / std::sqrt(m));
    CHECK(std::abs(s2 / m - 1) < 5 * std::sqrt(2.0 / m));
    CHECK(std::abs(s4 / m - 3) < 5 * std::sqrt(96.0 / m));
}
