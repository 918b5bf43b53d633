#pragma once

#include <cmath>
#include <cstdint>
#include <string>

namespace s2a {

// Deterministic, splittable random generator.
//
// Streams are xoshiro256** instances whose four state words are expanded
// from a 64-bit seed with splitmix64. The sample stream is a pure function
// of the seed, identical across platforms and runs; std::random
// distributions are avoided for that reason. split(tag) derives an
// independent child stream, so per-utterance / per-tensor seeds can be
// produced from one master seed.
class RngState {
public:
    explicit RngState(uint64_t seed) : seed_(seed) {
        uint64_t x = seed;
        for (auto& w : state_) w = splitmix64(x);
        // xoshiro must not start from the all-zero state
        if ((state_[0] | state_[1] | state_[2] | state_[3]) == 0) state_[0] = 0x9e3779b97f4a7c15ull;
    }

    uint64_t seed() const { return seed_; }
    static const char* algorithm() { return "xoshiro256** (seeded via splitmix64)"; }

    // Independent child stream; children with distinct tags are disjoint.
    RngState split(uint64_t tag) const {
        uint64_t x = seed_ ^ 0xa0761d6478bd642full;
        uint64_t a = splitmix64(x);
        x ^= tag * 0xe7037ed1a0b428dbull + 0x8ebc6af09c88c6e3ull;
        uint64_t b = splitmix64(x);
        return RngState(a ^ (b + tag));
    }

    uint64_t next_u64() {
        const uint64_t result = rotl(state_[1] * 5, 7) * 9;
        const uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl(state_[3], 45);
        return result;
    }

    // Uniform in [0, 1), 53-bit resolution.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Integer in [0, n). n must be > 0.
    uint64_t below(uint64_t n) { return next_u64() % n; }

    // Standard normal via Box-Muller (both draws consumed for determinism).
    double normal() {
        double u1 = uniform();
        double u2 = uniform();
        while (u1 <= 1e-300) u1 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

private:
    static uint64_t splitmix64(uint64_t& x) {
        uint64_t z = (x += 0x9e3779b97f4a7c15ull);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }
    static uint64_t rotl(uint64_t v, int k) { return (v << k) | (v >> (64 - k)); }

    uint64_t seed_;
    uint64_t state_[4];
};

}  // namespace s2a
