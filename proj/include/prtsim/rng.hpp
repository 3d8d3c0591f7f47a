#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <vector>

namespace prt {

/// Deterministic random source. All distributions are implemented on top of
/// the raw 64-bit stream so that a given seed produces the same draws on every
/// platform and standard library.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : m_engine(seed) {}

    /// Derive an independent sub-stream from a base seed and a small tag
    /// vector (stream name hash, period index, station id, ...). Uses
    /// seed_seq so that neighbouring tags produce unrelated streams.
    static Rng substream(std::uint64_t seed, std::initializer_list<std::uint64_t> tags) {
        std::vector<std::uint32_t> parts;
        parts.push_back(static_cast<std::uint32_t>(seed));
        parts.push_back(static_cast<std::uint32_t>(seed >> 32));
        for (std::uint64_t t : tags) {
            parts.push_back(static_cast<std::uint32_t>(t));
            parts.push_back(static_cast<std::uint32_t>(t >> 32));
        }
        std::seed_seq seq(parts.begin(), parts.end());
        Rng r(0);
        r.m_engine.seed(seq);
        return r;
    }

    std::uint64_t next_u64() { return m_engine(); }

    /// Uniform in [0, 1) with 53 bits of precision.
    double uniform01() {
        return static_cast<double>(m_engine() >> 11) * 0x1.0p-53;
    }

    /// Exponential with the given mean (mean = 1/rate).
    double exponential(double mean) {
        if (mean <= 0.0) throw std::invalid_argument("exponential mean must be > 0");
        double u = uniform01();
        return -std::log1p(-u) * mean;
    }

    bool bernoulli(double p) { return uniform01() < p; }

    /// Index into a discrete weight table (weights need not be normalised).
    std::size_t weighted_index(const std::vector<double>& weights) {
        double total = 0.0;
        for (double w : weights) total += w;
        if (total <= 0.0) throw std::invalid_argument("weighted_index: non-positive total weight");
        double x = uniform01() * total;
        double acc = 0.0;
        for (std::size_t i = 0; i < weights.size(); ++i) {
            acc += weights[i];
            if (x < acc) return i;
        }
        return weights.size() - 1;  // guard against rounding at the top end
    }

private:
    std::mt19937_64 m_engine;
};

/// Tags for the named sub-streams drawn from a scenario seed.
namespace stream {
inline constexpr std::uint64_t demand = 0x64656d616e64ull;  // "demand"
inline constexpr std::uint64_t ca = 0x6361ull;              // "ca"
}  // namespace stream

}  // namespace prt
