#pragma once

#include <cstdint>
#include <limits>
#include <random>
#include <string_view>
#include <utility>
#include <vector>

namespace metareg {

// splitmix64: fast, well-mixed 64-bit sequence used for seed derivation.
inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

// Derives an independent deterministic RNG stream from (seed, tag).
// Streams with distinct tags never overlap in practice; the same (seed, tag)
// always yields the same engine state.
inline std::mt19937_64 make_stream(std::uint64_t seed, std::string_view tag) {
    std::uint64_t s = seed ^ fnv1a64(tag);
    std::uint64_t a = splitmix64(s);
    std::uint64_t b = splitmix64(s);
    std::seed_seq seq{static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(a >> 32),
                      static_cast<std::uint32_t>(b), static_cast<std::uint32_t>(b >> 32)};
    return std::mt19937_64(seq);
}

// Unbiased draw from [0, n) by rejection; the mapping from engine output to
// result is pinned here rather than left to the library's distribution.
inline std::uint64_t uniform_below(std::mt19937_64& rng, std::uint64_t n) {
    if (n == 0) return 0;
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                std::numeric_limits<std::uint64_t>::max() % n;
    std::uint64_t x;
    do {
        x = rng();
    } while (x >= limit);
    return x % n;
}

template <typename T>
void shuffle_vec(std::vector<T>& v, std::mt19937_64& rng) {
    for (std::size_t i = v.size(); i > 1; --i) {
        const std::size_t j = static_cast<std::size_t>(uniform_below(rng, i));
        std::swap(v[i - 1], v[j]);
    }
}

// First n_draw entries of a partial Fisher-Yates over {0..n_from-1}.
inline std::vector<std::int64_t> sample_without_replacement(std::int64_t n_from,
                                                            std::int64_t n_draw,
                                                            std::mt19937_64& rng) {
    std::vector<std::int64_t> pool(static_cast<std::size_t>(n_from));
    for (std::int64_t i = 0; i < n_from; ++i) pool[static_cast<std::size_t>(i)] = i;
    for (std::int64_t i = 0; i < n_draw; ++i) {
        const auto j = i + static_cast<std::int64_t>(
                               uniform_below(rng, static_cast<std::uint64_t>(n_from - i)));
        std::swap(pool[static_cast<std::size_t>(i)], pool[static_cast<std::size_t>(j)]);
    }
    pool.resize(static_cast<std::size_t>(n_draw));
    return pool;
}

}  // namespace metareg
