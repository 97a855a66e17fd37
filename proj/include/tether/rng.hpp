#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace tether {

/// SplitMix64 finalizer; used to derive independent stream seeds from a base seed.
constexpr std::uint64_t mix_seed(std::uint64_t z) {
    z += 0x9E3779B97F4A7C15ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

/// Deterministic seed for a (base, index...) tuple, e.g. (seed, scenario, model).
inline std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> path) {
    std::uint64_t s = mix_seed(base);
    for (auto p : path) s = mix_seed(s ^ mix_seed(p + 0x632BE59BD9B4E019ULL));
    return s;
}

using Rng = std::mt19937_64;

/// Uniform draw on [center - half_width, center + half_width]; exact center when half_width == 0.
inline double uniform_around(Rng& rng, double center, double half_width) {
    const double u = std::generate_canonical<double, 53>(rng);
    return center + half_width * (2.0 * u - 1.0);
}

}  // namespace tether
