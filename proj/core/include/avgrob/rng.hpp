#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <span>

namespace avgrob {

// SplitMix64 step; used to expand a user seed into engine state.
inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// Deterministic noise stream. Normal variates use Box-Muller over the raw
// engine so that sequences are fixed by this code, not by the standard
// library's unspecified std::normal_distribution algorithm.
//
// A stream is owned by a single caller at a time; create one per worker or
// per data point (see for_point) rather than sharing.
class Rng {
public:
    explicit Rng(std::uint64_t seed) {
        std::uint64_t s = seed;
        engine_.seed(splitmix64(s));
    }

    // Per-point stream for batch work: derived from (seed, point index) only,
    // so results do not depend on worker count or scheduling order.
    static Rng for_point(std::uint64_t seed, std::uint64_t point_index) {
        return Rng(seed ^ point_index);
    }

    std::uint64_t next_u64() { return engine_(); }

    // Uniform in [0, 1).
    double uniform() {
        return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }

    // Uniform in (0, 1]; safe as a log() argument.
    double uniform_open() {
        return (static_cast<double>(engine_() >> 11) + 1.0) * 0x1.0p-53;
    }

    // Uniform strictly inside (0, 1); safe for quantile transforms with
    // unbounded tails.
    double uniform_interior() {
        return (static_cast<double>(engine_() >> 12) + 0.5) * 0x1.0p-52;
    }

    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        const double r = std::sqrt(-2.0 * std::log(uniform_open()));
        const double theta = 2.0 * pi() * uniform();
        spare_ = r * std::sin(theta);
        has_spare_ = true;
        return r * std::cos(theta);
    }

    void fill_normal(std::span<double> out) {
        for (double& v : out) v = normal();
    }

    void fill_uniform(std::span<double> out) {
        for (double& v : out) v = uniform();
    }

    static constexpr double pi() { return 3.14159265358979323846; }

private:
    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace avgrob
