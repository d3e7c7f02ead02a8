#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>

namespace raql {

/// Seeded generator with portable draws.
///
/// The standard distributions are implementation-defined, so the draws used
/// by every algorithm here are derived directly from the raw 64-bit engine
/// output (which the standard does pin down). Identical seeds therefore give
/// identical streams on every conforming toolchain.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    /// Uniform double in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    /// Uniform index in [0, n).
    std::size_t index(std::size_t n) {
        if (n == 0) throw std::invalid_argument("Rng::index: empty range");
        // Rejection sampling keeps the draw unbiased.
        const std::uint64_t bound = static_cast<std::uint64_t>(n);
        const std::uint64_t limit = UINT64_MAX - (UINT64_MAX % bound);
        std::uint64_t r;
        do {
            r = engine_();
        } while (r >= limit);
        return static_cast<std::size_t>(r % bound);
    }

    /// Draw an index from a cumulative distribution (last entry ~ 1).
    std::size_t from_cdf(std::span<const double> cdf) {
        const double u = uniform() * cdf.back();
        std::size_t i = 0;
        while (i + 1 < cdf.size() && u >= cdf[i]) ++i;
        return i;
    }

    /// Standard exponential draw, used for uniform Dirichlet rows.
    double exponential() { return -std::log1p(-uniform()); }

    std::uint64_t next() { return engine_(); }

private:
    std::mt19937_64 engine_;
};

/// Mixes a base seed with a stream label so parallel runs get distinct streams.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

}  // namespace raql
