#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace metacal {

using Rng = std::mt19937_64;

// SplitMix64 finalizer, used to derive well-separated sub-seeds from one
// master seed.
inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Independent RNG stream `stream_id` of a master seed. Streams with distinct
// ids never share state, so adding draws to one subsystem does not perturb
// another.
inline Rng make_rng(std::uint64_t seed, std::uint64_t stream_id) {
    return Rng(splitmix64(splitmix64(seed) ^ stream_id));
}

// Unbiased integer in [0, n). Hand-rolled (rejection sampling) instead of
// std::uniform_int_distribution, whose output is implementation-defined.
inline std::size_t uniform_index(Rng& g, std::size_t n) {
    const std::uint64_t bound = n;
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
    std::uint64_t r;
    do {
        r = g();
    } while (r >= limit);
    return static_cast<std::size_t>(r % bound);
}

// Uniform double in [0, 1) with 53 random bits.
inline double uniform_real(Rng& g) {
    return static_cast<double>(g() >> 11) * 0x1.0p-53;
}

inline double uniform_range(Rng& g, double lo, double hi) {
    return lo + (hi - lo) * uniform_real(g);
}

// Fisher-Yates shuffle driven by uniform_index, deterministic across
// platforms for a given engine state.
template <class T>
void shuffle_inplace(std::vector<T>& v, Rng& g) {
    for (std::size_t i = v.size(); i > 1; --i) {
        std::size_t j = uniform_index(g, i);
        std::swap(v[i - 1], v[j]);
    }
}

// k distinct indices drawn uniformly from [0, n), in draw order.
inline std::vector<std::size_t> sample_indices(Rng& g, std::size_t n, std::size_t k) {
    std::vector<std::size_t> pool(n);
    for (std::size_t i = 0; i < n; ++i) pool[i] = i;
    if (k > n) k = n;
    std::vector<std::size_t> out;
    out.reserve(k);
    for (std::size_t i = 0; i < k; ++i) {
        std::size_t j = i + uniform_index(g, n - i);
        std::swap(pool[i], pool[j]);
        out.push_back(pool[i]);
    }
    return out;
}

}  // namespace metacal
