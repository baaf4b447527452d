#pragma once

#include <cstdint>
#include <cmath>

namespace dla {

// Deterministic RNG with hand-rolled distributions. libstdc++'s distribution
// objects are implementation-defined, so corpora and golden files would not
// survive a toolchain change; these do.
class Rng {
public:
    explicit Rng(uint64_t seed) : state_(seed ? seed : 0x9e3779b97f4a7c15ull) {}

    uint64_t next_u64() {
        // xorshift* variant (splitmix64 mixing), period 2^64
        uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    // uniform in [0, 1)
    double uniform() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // inclusive integer range
    int64_t uniform_int(int64_t lo, int64_t hi) {
        uint64_t span = static_cast<uint64_t>(hi - lo) + 1;
        return lo + static_cast<int64_t>(next_u64() % span);
    }

    bool bernoulli(double p) { return uniform() < p; }

    // Box-Muller; one value per call, cache the pair
    double normal() {
        if (has_cached_) {
            has_cached_ = false;
            return cached_;
        }
        double u1 = uniform();
        double u2 = uniform();
        if (u1 < 1e-300) u1 = 1e-300;
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 6.283185307179586476925286766559 * u2;
        cached_ = r * std::sin(a);
        has_cached_ = true;
        return r * std::cos(a);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    // derive an independent stream, e.g. per page or per parameter tensor
    Rng fork(uint64_t salt) {
        uint64_t z = state_ ^ (0x632be59bd9b4e019ull * (salt + 1));
        z = (z ^ (z >> 29)) * 0xff51afd7ed558ccdull;
        return Rng(z ^ (z >> 32));
    }

private:
    uint64_t state_;
    double cached_ = 0.0;
    bool has_cached_ = false;
};

} // namespace dla
