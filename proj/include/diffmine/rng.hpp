#pragma once

#include <cstddef>
#include <cstdint>

namespace diffmine {

// Stateless 64-bit mixer (splitmix64 finalizer). All seed derivation in the
// project goes through this so that streams are reproducible across runs and
// platforms.
inline uint64_t mix_step(uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline uint64_t mix64(uint64_t a, uint64_t b) {
    return mix_step(a ^ (0x9e3779b97f4a7c15ULL + (b << 1)));
}

inline uint64_t mix64(uint64_t a, uint64_t b, uint64_t c) {
    return mix64(mix64(a, b), c);
}

// FNV-1a over raw bytes.
uint64_t hash_bytes64(const void* data, size_t n);

// xoshiro256++ with splitmix64 seeding. The standard <random> engines are
// portable but the distributions are not, so both live here.
class Rng {
public:
    explicit Rng(uint64_t seed);

    uint64_t next_u64();

    // Uniform in [0, 1).
    double uniform();
    // Uniform in [lo, hi).
    double uniform(double lo, double hi);
    // Uniform integer in [0, n). n must be > 0.
    int uniform_int(int n);
    // Standard normal via Box-Muller (pairs cached).
    double gaussian();

private:
    uint64_t s_[4];
    double spare_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace diffmine
