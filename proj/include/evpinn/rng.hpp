#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace evpinn {

// std::uniform_real_distribution / std::normal_distribution are
// implementation-defined; these hand-rolled draws keep seeded runs
// bit-identical across standard libraries.

inline double uniform01(std::mt19937_64& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline double uniform(std::mt19937_64& rng, double lo, double hi) {
    return lo + (hi - lo) * uniform01(rng);
}

/// Standard normal via Box-Muller.
inline double gaussian(std::mt19937_64& rng) {
    double u1 = uniform01(rng);
    while (u1 == 0.0) u1 = uniform01(rng);
    const double u2 = uniform01(rng);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

}  // namespace evpinn
