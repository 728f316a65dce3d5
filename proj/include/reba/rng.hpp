#pragma once

#include <cstdint>
#include <string_view>

namespace reba {

// All randomness in the project flows through this splitmix64 stream so that
// runs are bit-reproducible. Draw order is part of each caller's contract;
// independent sub-streams are obtained with derive_seed, never by sharing a
// generator across unrelated consumers.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64();

    // Uniform in [0, 1), 53-bit resolution.
    double next_unit();

    double next_uniform(double lo, double hi);

    // Standard normal via Box-Muller; generates pairs and caches the spare.
    double next_normal();

    // Uniform integer in [0, n); n must be > 0.
    std::uint64_t next_below(std::uint64_t n);

private:
    std::uint64_t state_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

// splitmix64 finalizer, used as the mixing primitive for seed derivation.
std::uint64_t mix64(std::uint64_t x);

// Stable named sub-seed: FNV-1a over the tag bytes folded into the parent
// seed. derive_seed(s, t, i) != derive_seed(s, t, j) for i != j.
std::uint64_t derive_seed(std::uint64_t seed, std::string_view tag);
std::uint64_t derive_seed(std::uint64_t seed, std::string_view tag, std::uint64_t index);

} // namespace reba
