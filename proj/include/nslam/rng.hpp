// Deterministic splitmix64-based RNG. Stream splits are pure functions of
// (state, tag), so any parallel consumer can derive its own stream and the
// result is independent of thread scheduling.
#pragma once

#include <cmath>
#include <cstdint>

namespace nslam {

inline uint64_t splitmix64(uint64_t& state) {
    uint64_t z = (state += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

class Rng {
  public:
    explicit Rng(uint64_t seed = 0) : state_(seed) {
        // burn-in so that small seeds decorrelate
        uint64_t s = state_;
        state_ = splitmix64(s) ^ 0x6a09e667f3bcc908ull;
    }

    uint64_t next_u64() { return splitmix64(state_); }

    // uniform in [0, 1)
    double uniform() { return double(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // uniform integer in [0, n)
    uint64_t uniform_int(uint64_t n) { return next_u64() % n; }

    // standard normal via Box-Muller (no caching: two u64 draws per sample)
    double normal() {
        double u1 = uniform(), u2 = uniform();
        if (u1 < 1e-300) u1 = 1e-300;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
    }

    // Child stream addressed by up to three tags.
    Rng fork(uint64_t a, uint64_t b = 0, uint64_t c = 0) const {
        uint64_t s = state_;
        s = splitmix64(s) ^ (a * 0x9e3779b97f4a7c15ull);
        s = splitmix64(s) ^ (b * 0xc2b2ae3d27d4eb4full);
        s = splitmix64(s) ^ (c * 0x165667b19e3779f9ull);
        return Rng(splitmix64(s));
    }

  private:
    uint64_t state_;
};

}  // namespace nslam
