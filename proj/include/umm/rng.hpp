#pragma once

#include <cmath>
#include <cstdint>
#include <string>

namespace umm {

// xoshiro256++ seeded through splitmix64. Self-contained so that streams are
// reproducible across compilers and standard libraries.
struct Rng {
    uint64_t s[4];

    explicit Rng(uint64_t seed = 0) { reseed(seed); }

    void reseed(uint64_t seed) {
        uint64_t x = seed;
        for (auto& si : s) si = splitmix64(x);
    }

    static uint64_t splitmix64(uint64_t& x) {
        x += 0x9e3779b97f4a7c15ull;
        uint64_t z = x;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    static uint64_t rotl(uint64_t v, int k) { return (v << k) | (v >> (64 - k)); }

    uint64_t next_u64() {
        uint64_t result = rotl(s[0] + s[3], 23) + s[0];
        uint64_t t = s[1] << 17;
        s[2] ^= s[0];
        s[3] ^= s[1];
        s[1] ^= s[2];
        s[0] ^= s[3];
        s[2] ^= t;
        s[3] = rotl(s[3], 45);
        return result;
    }

    // uniform in [0, n)
    uint64_t next_below(uint64_t n) {
        // rejection sampling keeps the draw unbiased
        uint64_t threshold = (0 - n) % n;
        for (;;) {
            uint64_t r = next_u64();
            if (r >= threshold) return r % n;
        }
    }

    // uniform in [0, 1)
    double next_double() { return double(next_u64() >> 11) * 0x1.0p-53; }
    float next_float() { return float(next_u64() >> 40) * 0x1.0p-24f; }

    // standard normal via Box-Muller. No cached spare: keeps the entire rng
    // state in s[4], so checkpoint save/restore round-trips exactly.
    double next_normal() {
        double u1;
        do {
            u1 = next_double();
        } while (u1 <= 1e-300);
        double u2 = next_double();
        double r = std::sqrt(-2.0 * std::log(u1));
        return r * std::cos(6.283185307179586476925286766559 * u2);
    }

    std::string state_hex() const;
    bool restore_hex(const std::string& hex);
};

// Stable derived seed for a (stream, index) pair, used to make data samples
// addressable by seed independent of draw order.
inline uint64_t derive_seed(uint64_t root, uint64_t stream, uint64_t index) {
    uint64_t x = root ^ (0x243f6a8885a308d3ull * (stream + 1));
    (void)Rng::splitmix64(x);
    x ^= 0x13198a2e03707344ull * (index + 1);
    return Rng::splitmix64(x);
}

} // namespace umm
