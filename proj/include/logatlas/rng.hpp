#pragma once

// Deterministic random primitives. std::mt19937_64 is bit-specified by the
// standard, but std::*_distribution is not, so every transform that a
// reproducibility contract depends on is implemented here by hand.

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace logatlas {

using Rng = std::mt19937_64;

// splitmix64 step; used to derive independent sub-seeds.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (salt + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline std::uint64_t mix_seed(std::uint64_t seed, const std::string& salt) {
    std::uint64_t h = 1469598103934665603ULL;  // FNV-1a
    for (unsigned char c : salt) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return mix_seed(seed, h);
}

// Uniform integer in [0, bound) by rejection; unbiased and portable.
inline std::uint64_t uniform_below(Rng& rng, std::uint64_t bound) {
    if (bound == 0) throw std::invalid_argument("uniform_below: bound must be > 0");
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
    std::uint64_t v;
    do {
        v = rng();
    } while (v >= limit);
    return v % bound;
}

// Uniform double in [0, 1) with 53 bits of randomness.
inline double uniform01(Rng& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline double uniform_in(Rng& rng, double lo, double hi) {
    return lo + (hi - lo) * uniform01(rng);
}

// Marsaglia polar method, no cached spare (keeps the stream position a pure
// function of the draws made so far).
inline double normal(Rng& rng, double mean = 0.0, double stddev = 1.0) {
    double u, v, s;
    do {
        u = 2.0 * uniform01(rng) - 1.0;
        v = 2.0 * uniform01(rng) - 1.0;
        s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    return mean + stddev * u * std::sqrt(-2.0 * std::log(s) / s);
}

// Knuth's product method below lambda=30, normal approximation above.
// The approximation is fine for event-count shaping; exactness is not a
// contract here, determinism is.
inline std::int64_t poisson(Rng& rng, double lambda) {
    if (lambda <= 0.0) return 0;
    if (lambda < 30.0) {
        const double limit = std::exp(-lambda);
        std::int64_t k = 0;
        double p = 1.0;
        do {
            ++k;
            p *= uniform01(rng);
        } while (p > limit);
        return k - 1;
    }
    const double draw = normal(rng, lambda, std::sqrt(lambda));
    return draw < 0.0 ? 0 : static_cast<std::int64_t>(std::llround(draw));
}

// Fisher-Yates with the portable bounded draw above.
template <typename T>
void shuffle(std::vector<T>& v, Rng& rng) {
    for (std::size_t i = v.size(); i > 1; --i) {
        const std::size_t j = static_cast<std::size_t>(uniform_below(rng, i));
        std::swap(v[i - 1], v[j]);
    }
}

// First k elements of a seeded permutation of [0, n): sampling without
// replacement.
inline std::vector<std::size_t> sample_without_replacement(std::size_t n,
                                                           std::size_t k,
                                                           Rng& rng) {
    if (k > n)
        throw std::invalid_argument("sample_without_replacement: k > n");
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    for (std::size_t i = 0; i < k; ++i) {
        const std::size_t j =
            i + static_cast<std::size_t>(uniform_below(rng, n - i));
        std::swap(idx[i], idx[j]);
    }
    idx.resize(k);
    return idx;
}

}  // namespace logatlas
