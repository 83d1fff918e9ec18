#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <vector>

namespace grlsm {

// All randomness in the project flows through named xoshiro256++ streams
// seeded via splitmix64, so every run is bit-reproducible from (seed,
// stream id, key). Stream ids per consumer:
//
//   0 init        weight initialization
//   1 batch       epoch shuffling in the trainer
//   2 perturb     stability perturbation directions
//   3 sample      autoregressive sampling (temperature > 0)
//   4 hutchinson  Frobenius probe vectors (key = latent index)
//   5 power       power-iteration start vectors (key = latent index)
//   6 corpus      document generation (key = document index)
//   7 split       train/validation document split
enum Stream : std::uint64_t {
    kStreamInit = 0,
    kStreamBatch = 1,
    kStreamPerturb = 2,
    kStreamSample = 3,
    kStreamHutchinson = 4,
    kStreamPower = 5,
    kStreamCorpus = 6,
    kStreamSplit = 7,
};

struct SplitMix64 {
    std::uint64_t state;

    std::uint64_t next() {
        state += 0x9E3779B97F4A7C15ull;
        std::uint64_t z = state;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    }
};

class Xoshiro256pp {
public:
    // Stream construction: splitmix64 state = seed ^ GOLDEN*(consumer+1)
    // ^ key*0xD1B54A32D192ED03, then four outputs form the xoshiro state.
    static Xoshiro256pp stream(std::uint64_t seed, std::uint64_t consumer,
                               std::uint64_t key = 0) {
        SplitMix64 sm{seed ^ (0x9E3779B97F4A7C15ull * (consumer + 1)) ^
                      (key * 0xD1B54A32D192ED03ull)};
        Xoshiro256pp g;
        for (auto& w : g.s_) w = sm.next();
        return g;
    }

    std::uint64_t next() {
        const std::uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
        const std::uint64_t t = s_[1] << 17;
        s_[2] ^= s_[0];
        s_[3] ^= s_[1];
        s_[1] ^= s_[2];
        s_[0] ^= s_[3];
        s_[2] ^= t;
        s_[3] = rotl(s_[3], 45);
        return result;
    }

    // [0, 1) with 53 random bits.
    double uniform01() { return double(next() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    // Unbiased integer in [0, n) by rejection.
    std::uint64_t below(std::uint64_t n) {
        const std::uint64_t bound = UINT64_MAX - UINT64_MAX % n;
        std::uint64_t x;
        do {
            x = next();
        } while (x >= bound);
        return x % n;
    }

    // Box-Muller, cosine branch; consumes two uniforms per call.
    double normal() {
        const double u1 = 1.0 - uniform01(); // (0, 1], keeps log finite
        const double u2 = uniform01();
        return std::sqrt(-2.0 * std::log(u1)) *
               std::cos(2.0 * std::numbers::pi * u2);
    }

    // +1/-1 from the top bit.
    double rademacher() { return (next() >> 63) ? 1.0 : -1.0; }

    // Fisher-Yates, back to front.
    template <class T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    static std::uint64_t rotl(std::uint64_t x, int k) {
        return (x << k) | (x >> (64 - k));
    }

    std::uint64_t s_[4] = {};
};

// Unit-norm Gaussian direction of dimension n (redraws the all-zero vector,
// which has probability zero).
inline std::vector<double> unit_direction(Xoshiro256pp& g, std::size_t n) {
    std::vector<double> u(n);
    double norm = 0.0;
    do {
        norm = 0.0;
        for (auto& x : u) {
            x = g.normal();
            norm += x * x;
        }
    } while (norm == 0.0);
    norm = std::sqrt(norm);
    for (auto& x : u) x /= norm;
    return u;
}

} // namespace grlsm
