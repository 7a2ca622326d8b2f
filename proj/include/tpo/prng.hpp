#pragma once

#include <algorithm>
#include <cstdint>
#include <string_view>
#include <vector>

namespace tpo {

// All randomness in the toolkit flows from one 64-bit seed fanned out by
// string stream ids. The scheme is fixed so that every draw is reproducible
// across platforms and test runs:
//
//   fnv1a64(s)     : FNV-1a, offset 0xcbf29ce484222325, prime 0x100000001b3
//   stream state0  : seed XOR fnv1a64(stream_id)
//   splitmix64     : state += 0x9e3779b97f4a7c15
//                    z = state; z = (z ^ z>>30) * 0xbf58476d1ce4e5b9
//                    z = (z ^ z>>27) * 0x94d049bb133111eb; return z ^ z>>31
//   next_below(n)  : modulo rejection (threshold = 2^64 mod n), unbiased
//
// Draws keyed by distinct stream ids are decorrelated, so call order across
// streams never matters.

constexpr std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

class SplitMix64 {
public:
    explicit SplitMix64(std::uint64_t state) : state_(state) {}

    SplitMix64(std::uint64_t seed, std::string_view stream_id)
        : state_(seed ^ fnv1a64(stream_id)) {}

    std::uint64_t next() {
        state_ += 0x9e3779b97f4a7c15ULL;
        std::uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    // Uniform in [0, n); n must be nonzero.
    std::uint64_t next_below(std::uint64_t n) {
        const std::uint64_t threshold = (0 - n) % n;
        for (;;) {
            const std::uint64_t r = next();
            if (r >= threshold) return r % n;
        }
    }

    // Uniform real in [0, 1) with 53 bits of precision.
    double next_double() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

private:
    std::uint64_t state_;
};

// First k elements of a partial Fisher-Yates pass over `pool`, returned in
// ascending order. Consumes exactly k bounded draws.
template <typename T>
std::vector<T> sample_without_replacement(std::vector<T> pool, std::size_t k, SplitMix64& rng) {
    for (std::size_t i = 0; i < k; ++i) {
        const std::size_t j = i + static_cast<std::size_t>(rng.next_below(pool.size() - i));
        std::swap(pool[i], pool[j]);
    }
    pool.resize(k);
    std::sort(pool.begin(), pool.end());
    return pool;
}

// In-place Fisher-Yates shuffle, iterating from the back.
template <typename T>
void shuffle(std::vector<T>& v, SplitMix64& rng) {
    for (std::size_t i = v.size(); i > 1; --i) {
        const std::size_t j = static_cast<std::size_t>(rng.next_below(i));
        std::swap(v[i - 1], v[j]);
    }
}

inline std::string hex64(std::uint64_t v) {
    static const char* digits = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[static_cast<std::size_t>(i)] = digits[v & 0xf];
        v >>= 4;
    }
    return out;
}

}  // namespace tpo
