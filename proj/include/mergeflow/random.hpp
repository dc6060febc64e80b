#pragma once

// Seeded sampling helpers. The standard <random> distributions are
// implementation-defined, so everything that must be reproducible across
// toolchains draws through these on top of std::mt19937_64.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <span>
#include <utility>

namespace mergeflow::rnd {

using Engine = std::mt19937_64;

/// splitmix64 finalizer; derives independent stream seeds.
constexpr std::uint64_t mix(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

constexpr std::uint64_t derive(std::uint64_t seed, std::uint64_t stream) { return mix(seed ^ mix(stream + 1)); }

inline double uniform01(Engine& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

inline double uniform(Engine& rng, double lo, double hi) { return lo + (hi - lo) * uniform01(rng); }

/// Uniform integer in [0, n). Rejection sampling, no modulo bias.
inline std::uint64_t index(Engine& rng, std::uint64_t n) {
    const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
    std::uint64_t r;
    do {
        r = rng();
    } while (r >= limit);
    return r % n;
}

inline double normal(Engine& rng) {
    double u1 = uniform01(rng);
    while (u1 <= 0.0) u1 = uniform01(rng);
    const double u2 = uniform01(rng);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

inline double lognormal(Engine& rng, double mu, double sigma) { return std::exp(mu + sigma * normal(rng)); }

inline double exponential(Engine& rng, double mean) {
    double u = uniform01(rng);
    while (u <= 0.0) u = uniform01(rng);
    return -mean * std::log(u);
}

/// Knuth for small means, normal approximation above 60.
inline std::int64_t poisson(Engine& rng, double mean) {
    if (mean <= 0.0) return 0;
    if (mean > 60.0) {
        const double x = std::round(mean + std::sqrt(mean) * normal(rng));
        return x < 0.0 ? 0 : static_cast<std::int64_t>(x);
    }
    const double limit = std::exp(-mean);
    std::int64_t k = 0;
    double p = uniform01(rng);
    while (p > limit) {
        ++k;
        p *= uniform01(rng);
    }
    return k;
}

inline bool bernoulli(Engine& rng, double p) { return uniform01(rng) < p; }

template <class T>
void shuffle(std::span<T> values, Engine& rng) {
    for (std::size_t i = values.size(); i > 1; --i) {
        const auto j = static_cast<std::size_t>(index(rng, i));
        std::swap(values[i - 1], values[j]);
    }
}

}  // namespace mergeflow::rnd
