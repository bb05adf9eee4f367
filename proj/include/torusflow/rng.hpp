#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "torusflow/lattice.hpp"

namespace torusflow {

namespace detail {

inline uint64_t mix64(uint64_t z) {
    z ^= z >> 30;
    z *= 0xbf58476d1ce4e5b9ULL;
    z ^= z >> 27;
    z *= 0x94d049bb133111ebULL;
    z ^= z >> 31;
    return z;
}

inline constexpr uint64_t golden = 0x9e3779b97f4a7c15ULL;

}  // namespace detail

/// Stateless counter-based generator: every draw is a pure function of
/// (seed, stream, step, channel, counter), so paths can be produced in any order,
/// on any worker, with identical results.
struct CounterRng {
    uint64_t seed = 0;

    uint64_t word(uint64_t stream, uint64_t step, uint64_t channel, uint64_t counter) const {
        uint64_t h = detail::mix64(seed + detail::golden);
        h = detail::mix64(h ^ (stream * detail::golden + 0x243f6a8885a308d3ULL));
        h = detail::mix64(h ^ (step * detail::golden + 0x13198a2e03707344ULL));
        h = detail::mix64(h ^ (channel * detail::golden + 0xa4093822299f31d0ULL));
        return detail::mix64(h ^ (counter * detail::golden + 0x082efa98ec4e6c89ULL));
    }

    /// Uniform on (0, 1].
    double uniform(uint64_t stream, uint64_t step, uint64_t channel, uint64_t counter) const {
        return double((word(stream, step, channel, counter) >> 11) + 1) * 0x1.0p-53;
    }

    /// Standard normal via Box-Muller on two counter draws.
    double normal(uint64_t stream, uint64_t step, uint64_t channel) const {
        const double u1 = uniform(stream, step, channel, 0);
        const double u2 = uniform(stream, step, channel, 1);
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(two_pi * u2);
    }
};

/// Brownian increments for a fixed set of noise channels. Draws are keyed at a base
/// (finest) step size; a coarse step aggregates `aggregate` consecutive base
/// increments, so refinement studies see the same underlying path at every level.
struct BrownianDriver {
    CounterRng rng;
    uint64_t stream = 0;
    double base_dt = 1e-3;
    int aggregate = 1;
    int n_channels = 0;

    double dt() const { return base_dt * aggregate; }

    void increments(uint64_t coarse_step, double* out) const {
        const double scale = std::sqrt(base_dt);
        for (int ch = 0; ch < n_channels; ++ch) {
            double s = 0;
            for (int a = 0; a < aggregate; ++a)
                s += scale * rng.normal(stream, coarse_step * uint64_t(aggregate) + a, uint64_t(ch));
            out[ch] = s;
        }
    }

    std::vector<double> increments(uint64_t coarse_step) const {
        std::vector<double> out(static_cast<size_t>(n_channels));
        increments(coarse_step, out.data());
        return out;
    }
};

/// Distinct stream ids for independent path families (iteration/restart/path indexing).
inline uint64_t stream_id(uint64_t family, uint64_t member) {
    return detail::mix64(family * detail::golden + 0xb7e151628aed2a6bULL) + member;
}

}  // namespace torusflow
