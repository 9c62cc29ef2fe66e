#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <vector>

#include "feddah/detmath.hpp"

// Deterministic randomness. mt19937_64 output is fully specified by the
// standard; the distribution transforms below are our own so that streams
// are bit-identical across standard libraries.

namespace feddah {

inline uint64_t splitmix64(uint64_t& state) {
    uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// Derives an independent child seed from a base seed and a path of tags
// (e.g. {kSeedData, client_id}).
inline uint64_t derive_seed(uint64_t base, std::initializer_list<uint64_t> path) {
    uint64_t s = base ^ 0x6a09e667f3bcc908ULL;
    splitmix64(s);
    for (uint64_t p : path) {
        s ^= p + 0x9e3779b97f4a7c15ULL + (s << 6) + (s >> 2);
        splitmix64(s);
    }
    uint64_t out = s;
    return splitmix64(out);
}

// Tags for seed derivation paths. Values are arbitrary but frozen.
enum SeedTag : uint64_t {
    kSeedIdentity = 1,
    kSeedHyperInit = 2,
    kSeedClientInit = 3,
    kSeedStream = 4,
    kSeedData = 5,
    kSeedShardOrder = 6,
};

class Rng {
  public:
    explicit Rng(uint64_t seed) : gen_(seed) {}

    uint64_t next_u64() { return gen_(); }

    // Uniform in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Unbiased integer in [lo, hi] via rejection sampling.
    int64_t uniform_int(int64_t lo, int64_t hi) {
        uint64_t range = static_cast<uint64_t>(hi - lo) + 1;
        uint64_t threshold = (0ULL - range) % range;
        for (;;) {
            uint64_t r = gen_();
            if (r >= threshold) return lo + static_cast<int64_t>(r % range);
        }
    }

    // Marsaglia polar method (second deviate discarded). Uses det_log so the
    // stream does not depend on libm.
    double normal(double mu, double sigma) {
        for (;;) {
            double u = 2.0 * uniform() - 1.0;
            double v = 2.0 * uniform() - 1.0;
            double s = u * u + v * v;
            if (s > 0.0 && s < 1.0) {
                return mu + sigma * u * std::sqrt(-2.0 * det_log(s) / s);
            }
        }
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            size_t j = static_cast<size_t>(uniform_int(0, static_cast<int64_t>(i) - 1));
            std::swap(v[i - 1], v[j]);
        }
    }

  private:
    std::mt19937_64 gen_;
};

}  // namespace feddah
