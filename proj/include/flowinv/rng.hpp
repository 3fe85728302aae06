#pragma once

#include <cstdint>

#include "flowinv/tensor.hpp"

namespace flowinv {

// SplitMix64 (Steele/Lea/Blackburn finalizer over a Weyl sequence). The
// integer stream is bit-identical for a given seed on every platform.
// Normal draws go through Box-Muller and therefore depend on libm's log/cos;
// they replay identically on the same build, which is what the tests rely on.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : seed_(seed), state_(seed) {}

    std::uint64_t seed() const { return seed_; }

    std::uint64_t next_u64() {
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    // Uniform in [0,1), 53-bit resolution.
    double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // Uniform in (0,1]; safe under log().
    double next_double_open() { return (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53; }

    // Standard normal via Box-Muller; pairs are generated together and the
    // second value cached.
    double next_normal() {
        if (has_cached_) {
            has_cached_ = false;
            return cached_;
        }
        double u1 = next_double_open();
        double u2 = next_double();
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 6.283185307179586476925286766559 * u2;
        cached_ = r * std::sin(a);
        has_cached_ = true;
        return r * std::cos(a);
    }

    int next_below(int n) { return static_cast<int>(next_u64() % static_cast<std::uint64_t>(n)); }

    // Independent child stream for parallel runs: seed XOR run-index.
    Rng child(std::uint64_t run_index) const { return Rng(seed_ ^ run_index); }

    Latent normal_latent(int c, int h, int w) {
        Latent z(c, h, w);
        for (double& x : z.v) x = next_normal();
        return z;
    }

private:
    std::uint64_t seed_;
    std::uint64_t state_;
    bool has_cached_ = false;
    double cached_ = 0.0;
};

}  // namespace flowinv
