#pragma once

#include <array>
#include <cstdint>
#include <string_view>

namespace csl {

// Random number generation used by every simulation in the project.
//
// Generator: xoshiro256** (Blackman & Vigna), state seeded by four outputs of
// SplitMix64. Uniform doubles take the top 53 bits. Normals use the Marsaglia
// polar method with a cached spare. Bounded integers use rejection on the
// top bits. Nothing here depends on <random> distributions, whose output is
// implementation-defined, so streams are identical across standard libraries.
//
// Streams are split by deriving a fresh 64-bit seed from
// (master seed, trial index, purpose tag) with derive_seed().

std::uint64_t splitmix64(std::uint64_t& state);

/// 64-bit FNV-1a of a byte string.
std::uint64_t fnv1a64(std::string_view bytes);

/// Seed for an independent stream identified by (master, trial, purpose).
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t trial, std::string_view purpose);

class Rng {
public:
    explicit Rng(std::uint64_t seed);

    std::uint64_t next_u64();
    /// Uniform on [0, 1).
    double uniform();
    /// Uniform on (0, 1); never returns 0, safe for log().
    double uniform_open();
    double normal();
    /// Uniform integer in [0, bound).
    std::uint64_t below(std::uint64_t bound);
    bool bernoulli(double p) { return uniform() < p; }

private:
    std::array<std::uint64_t, 4> s_{};
    double spare_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace csl
