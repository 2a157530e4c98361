#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace oma {

/// Deterministic random stream. Substream keys let independent chains /
/// datasets derive reproducible generators from one user seed, so parallel
/// and serial execution produce identical draws.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(mix(seed)) {}

    /// Derive an independent substream from (seed, key...) without sharing state.
    static Rng stream(std::uint64_t seed, std::uint64_t key0, std::uint64_t key1 = 0) {
        return Rng(mix(seed) ^ mix(key0 * 0x9e3779b97f4a7c15ULL + 0x243f6a8885a308d3ULL) ^
                   mix(key1 * 0xd1342543de82ef95ULL + 0x452821e638d01377ULL));
    }

    std::uint64_t next_u64() {
        // splitmix64 step; passes standard statistical batteries and is
        // stable across platforms, unlike std::normal_distribution.
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    /// Uniform on (0, 1); never returns exactly 0 or 1.
    double uniform01() {
        return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    /// Standard normal via Box-Muller (deterministic formula, no state cache).
    double normal() {
        const double u1 = uniform01();
        const double u2 = uniform01();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

    /// Uniform integer in [0, n).
    std::uint64_t uniform_index(std::uint64_t n) { return next_u64() % n; }

private:
    explicit Rng(std::uint64_t raw, int) : state_(raw) {}

    static std::uint64_t mix(std::uint64_t z) {
        z = (z ^ (z >> 33)) * 0xff51afd7ed558ccdULL;
        z = (z ^ (z >> 33)) * 0xc4ceb9fe1a85ec53ULL;
        return z ^ (z >> 33);
    }

    std::uint64_t state_;
};

}  // namespace oma
