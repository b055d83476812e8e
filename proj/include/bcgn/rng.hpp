#pragma once

#include <cmath>
#include <cstdint>
#include <span>

namespace bcgn {

// Deterministic 64-bit generator (splitmix64). Normal variates come from
// Box-Muller without pair caching, so the full generator state is a single
// u64 and can be serialized into checkpoints.
class Rng {
public:
    explicit Rng(uint64_t seed) : state_(seed) {}

    uint64_t next_u64() {
        state_ += 0x9e3779b97f4a7c15ULL;
        uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    // Uniform in [0, 1).
    double uniform() { return double(next_u64() >> 11) * 0x1.0p-53; }

    // Uniform in [lo, hi).
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Standard normal via Box-Muller; one draw consumes two u64s.
    double normal() {
        double u1 = uniform();
        double u2 = uniform();
        if (u1 < 1e-300) u1 = 1e-300;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    // Index in [0, n).
    uint64_t below(uint64_t n) { return n == 0 ? 0 : next_u64() % n; }

    template <typename T>
    void fill_normal(std::span<T> out, double mean, double stddev) {
        for (T& v : out) v = static_cast<T>(normal(mean, stddev));
    }

    template <typename T>
    void fill_uniform(std::span<T> out, double lo, double hi) {
        for (T& v : out) v = static_cast<T>(uniform(lo, hi));
    }

    uint64_t state() const { return state_; }
    void set_state(uint64_t s) { state_ = s; }

    // Derives an independent stream; used so init / shuffling / latent
    // sampling draw from separate deterministic sequences.
    static uint64_t stream(uint64_t seed, uint64_t salt) {
        Rng r(seed ^ (salt * 0xd1342543de82ef95ULL + 0x2545f4914f6cdd1dULL));
        return r.next_u64();
    }

private:
    uint64_t state_;
};

}  // namespace bcgn
