#pragma once

#include <cstdint>

namespace arflow {

// Counter-based generator: the value stream is a pure function of
// (seed, counter), so identical states reproduce identical draws on every
// platform and independent streams are made by forking the seed. Mixing is
// the SplitMix64 finalizer over seed + counter * golden-ratio increment.
struct RngState {
    uint64_t seed = 0;
    uint64_t counter = 0;

    explicit RngState(uint64_t s = 0, uint64_t c = 0) : seed(s), counter(c) {}

    static uint64_t mix(uint64_t z) {
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    }

    uint64_t next_u64() {
        ++counter;
        return mix(seed + counter * 0x9E3779B97F4A7C15ull);
    }

    // Uniform in [0, 1), 53 random bits.
    double next_uniform() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    // Independent stream derived from this seed and a tag; counter starts
    // fresh, so forks never collide with the parent stream.
    RngState fork(uint64_t tag) const {
        return RngState(mix(seed ^ mix(tag + 0x9E3779B97F4A7C15ull)), 0);
    }
};

// Standard-normal pair via Box-Muller over the counter-based uniforms.
// Draws exactly two u64s per call.
void gaussian_pair(RngState& rng, double& g0, double& g1);

} // namespace arflow
