#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

#include "util.hpp"

namespace hamlet {

/// Counter-based generator (splitmix64 over seed + counter*golden). Draw k is a
/// pure function of (seed, k), so derived streams replay identically no matter
/// where or in what order they are consumed.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : seed_(seed) {}

    std::uint64_t next_u64() {
        std::uint64_t z = seed_ + (++counter_) * 0x9E3779B97F4A7C15ULL;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    // [0,1)
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    double normal() {
        const double u1 = 1.0 - uniform();  // (0,1]
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
    }

    std::uint64_t below(std::uint64_t n) { return n ? next_u64() % n : 0; }

    std::uint64_t seed() const { return seed_; }

    /// Stable per-module stream: hash of (name, seed, salt).
    Rng derive(std::string_view name, std::uint64_t salt = 0) const {
        std::uint64_t h = fnv1a(name);
        h = fnv1a(&seed_, sizeof seed_, h);
        h = fnv1a(&salt, sizeof salt, h);
        return Rng(h);
    }

private:
    std::uint64_t seed_;
    std::uint64_t counter_ = 0;
};

}  // namespace hamlet
