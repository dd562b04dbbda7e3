#pragma once

#include <cstdint>

namespace trbsde {

/// SplitMix64 finalizer. Used both as the counter-to-bits map of NoiseStream
/// and to derive independent seeds from (seed, tag) pairs.
constexpr std::uint64_t mix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag) {
    return mix64(mix64(seed) ^ mix64(tag + 0x632be59bd9b4e019ULL));
}

/// Counter-based random stream. The i-th draw is a pure function of
/// (key, i), so a trajectory's noise does not depend on which thread runs it
/// or on how many draws other trajectories made.
///
/// Gaussian variates use the Box-Muller transform on pairs of uniforms
/// u1 in (0, 1], u2 in [0, 1): z0 = sqrt(-2 ln u1) cos(2 pi u2),
/// z1 = sqrt(-2 ln u1) sin(2 pi u2), returned in that order.
class NoiseStream {
public:
    NoiseStream(std::uint64_t seed, std::uint64_t stream, std::uint64_t substream = 0)
        : key_(derive_seed(derive_seed(seed, stream), substream)) {}

    std::uint64_t next_bits() { return mix64(key_ ^ mix64(counter_++)); }

    /// Uniform on [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(next_bits() >> 11) * 0x1.0p-53; }

    double normal();

    std::uint64_t counter() const noexcept { return counter_; }

private:
    std::uint64_t key_;
    std::uint64_t counter_ = 0;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

// Seed domains. Forward, score, reversed and evaluation draws never share a key.
enum class SeedDomain : std::uint64_t {
    Forward = 1,
    Score = 2,
    Reversed = 3,
    Regression = 4,
    Evaluation = 5,
    InitDistribution = 6,
    Network = 7,
};

constexpr std::uint64_t domain_seed(std::uint64_t seed, SeedDomain d, std::uint64_t round = 0) {
    return derive_seed(derive_seed(seed, static_cast<std::uint64_t>(d)), round);
}

}  // namespace trbsde
