#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

namespace tacit {

inline uint64_t splitmix64(uint64_t& state) {
    uint64_t z = (state += 0x9E3779B97F4A7C15ull);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

/// Derives an independent sub-seed from a base seed and up to two stream ids.
/// All shuffles and per-sample draws key their generators through this, so a
/// single u64 seed reproduces every stream in a run.
inline uint64_t derive_seed(uint64_t base, uint64_t stream_a, uint64_t stream_b = 0) {
    uint64_t s = base;
    s = splitmix64(s) ^ stream_a;
    s = splitmix64(s) ^ stream_b;
    return splitmix64(s);
}

/// xoshiro256** generator. Seeding expands the u64 seed through splitmix64.
/// bounded(n) maps next() with a plain modulo; the mapping is part of the
/// documented contract so the draw sequence can be reproduced elsewhere.
class Xoshiro256ss {
public:
    explicit Xoshiro256ss(uint64_t seed) {
        uint64_t sm = seed;
        for (auto& w : state_) w = splitmix64(sm);
    }

    uint64_t next() {
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

    /// Uniform draw in [0, n), n >= 1.
    uint64_t bounded(uint64_t n) { return next() % n; }

    /// Uniform double in [0, 1) with 53 random bits.
    double uniform01() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    /// Uniform double in (0, 1]; safe as a log() argument.
    double uniform01_open() {
        return static_cast<double>((next() >> 11) + 1) * 0x1.0p-53;
    }

    /// Standard normal via Box-Muller (cosine branch only).
    double normal() {
        const double u1 = uniform01_open();
        const double u2 = uniform01();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
    }

    /// Normal(0, std) resampled until within [-2 std, 2 std].
    double truncated_normal(double std_dev) {
        for (;;) {
            const double x = normal() * std_dev;
            if (std::abs(x) <= 2.0 * std_dev) return x;
        }
    }

    /// Child generator for an independent stream.
    Xoshiro256ss split(uint64_t stream) { return Xoshiro256ss(derive_seed(next(), stream)); }

private:
    static uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

    uint64_t state_[4];
};

/// Fisher-Yates; identical permutation for identical generator state.
template <typename T>
void shuffle(std::vector<T>& items, Xoshiro256ss& rng) {
    for (size_t i = items.size(); i > 1; --i) {
        const size_t j = static_cast<size_t>(rng.bounded(i));
        std::swap(items[i - 1], items[j]);
    }
}

/// Identity permutation of n elements, shuffled by the given generator.
inline std::vector<uint32_t> random_permutation(size_t n, Xoshiro256ss& rng) {
    std::vector<uint32_t> perm(n);
    for (size_t i = 0; i < n; ++i) perm[i] = static_cast<uint32_t>(i);
    shuffle(perm, rng);
    return perm;
}

}  // namespace tacit
