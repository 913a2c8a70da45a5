// Copyright 2026 The doccomp Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>

namespace doccomp {

/// SplitMix64. Every random draw in the library goes through this generator so
/// that runs are bit-reproducible across platforms and standard libraries.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) : state_(seed) {}

    std::uint64_t next_u64() {
        std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ull);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    }

    /// Uniform in [0, 1) with 53 bits of resolution.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, n). n must be positive.
    std::uint64_t below(std::uint64_t n) { return next_u64() % n; }

    /// Uniform integer in [lo, hi].
    int range(int lo, int hi) { return lo + static_cast<int>(below(static_cast<std::uint64_t>(hi - lo + 1))); }

    double normal() {
        // Box-Muller; one value per call keeps the stream simple.
        double u1 = uniform();
        double u2 = uniform();
        if (u1 < 1e-300) u1 = 1e-300;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
    }

    /// Derives an independent stream, e.g. one per sample or per page.
    Rng fork(std::uint64_t salt) {
        Rng tmp(state_ ^ (salt * 0xD1B54A32D192ED03ull));
        return Rng(tmp.next_u64());
    }

private:
    std::uint64_t state_;
};

/// Stateless seed mixing for per-item streams: mix_seed(seed, i) is stable.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
    Rng r(seed ^ (salt + 0x632BE59BD9B4E019ull) * 0x9E3779B97F4A7C15ull);
    r.next_u64();
    return r.next_u64();
}

}  // namespace doccomp
