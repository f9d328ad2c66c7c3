#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include "g2/matrix.hpp"

namespace g2 {

/// splitmix64 mixing step; used to derive independent sub-seeds from a
/// global seed and a stream id so every experiment component gets its own
/// reproducible stream.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// Deterministic RNG with pinned distribution transforms (the std::
/// distributions are implementation-defined, so we roll our own on top of
/// mt19937_64).
class Rng {
public:
    explicit Rng(std::uint64_t seed) : seed_(seed), engine_(mix_seed(seed, 0)) {}

    std::uint64_t next_u64() { return engine_(); }

    /// Uniform in [0, 1).
    double uniform() {
        return std::ldexp(static_cast<double>(engine_() >> 11), -53);
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n) {
        // rejection sampling to avoid modulo bias
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        std::uint64_t x;
        do {
            x = engine_();
        } while (x >= limit);
        return x % n;
    }

    /// Standard normal via Box-Muller (no cached spare, keeps state simple).
    double normal() {
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925287 * u2);
    }

    void fill_uniform(Matrix& m, double lo, double hi) {
        for (std::size_t i = 0; i < m.rows(); ++i)
            for (std::size_t j = 0; j < m.cols(); ++j) m(i, j) = uniform(lo, hi);
    }

    /// Glorot-uniform initialization for a fan_in x fan_out weight.
    void fill_glorot(Matrix& m) {
        const double a = std::sqrt(6.0 / static_cast<double>(m.rows() + m.cols()));
        fill_uniform(m, -a, a);
    }

    /// Derive an independent child generator; stream 0 is not the parent.
    Rng split(std::uint64_t stream) const { return Rng(mix_seed(seed_, stream + 1)); }

private:
    std::uint64_t seed_;
    std::mt19937_64 engine_;
};

}  // namespace g2
