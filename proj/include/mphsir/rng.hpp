#pragma once

// Deterministic random number generation. Everything in the pipeline that
// draws randomness goes through this header so that runs replay bit-exactly
// on any platform: the generator and every distribution are implemented here
// rather than delegated to implementation-defined std::* distributions.

#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string_view>
#include <vector>

namespace mphsir {

// SplitMix64 step, also used as the mixing function for seed derivation.
inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline std::uint64_t hash64(std::uint64_t a) {
    std::uint64_t s = a;
    return splitmix64(s);
}

// Combines seed components (scene ids, task tags, step counters) into one
// stream seed. Order-sensitive by construction.
inline std::uint64_t hash64(std::uint64_t a, std::uint64_t b) {
    std::uint64_t s = a;
    std::uint64_t h = splitmix64(s);
    s = h ^ (b + 0x9e3779b97f4a7c15ULL);
    return splitmix64(s);
}

inline std::uint64_t hash64(std::uint64_t a, std::uint64_t b, std::uint64_t c) {
    return hash64(hash64(a, b), c);
}

inline std::uint64_t hash64(std::uint64_t a, std::uint64_t b, std::uint64_t c, std::uint64_t d) {
    return hash64(hash64(a, b, c), d);
}

inline std::uint64_t hash64_str(std::string_view s) {
    // FNV-1a, then one mix round.
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : s) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    return hash64(h);
}

// xoshiro256++ with SplitMix64 seeding.
class Rng {
public:
    explicit Rng(std::uint64_t seed) {
        std::uint64_t s = seed;
        for (auto& w : state_) w = splitmix64(s);
    }

    std::uint64_t next_u64() {
        const std::uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
        const std::uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl(state_[3], 45);
        return result;
    }

    // Uniform double in [0, 1) with 53 random mantissa bits.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [0, n). 128-bit multiply keeps the mapping unbiased
    // enough for our purposes and branch-free.
    std::uint64_t uniform_index(std::uint64_t n) {
        return static_cast<std::uint64_t>(
            (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
    }

    // Standard normal via Box-Muller; the pair partner is cached.
    double normal() {
        if (have_cached_) {
            have_cached_ = false;
            return cached_;
        }
        double u1 = uniform();
        double u2 = uniform();
        // Guard against log(0).
        if (u1 <= 0.0) u1 = 0x1.0p-53;
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 6.283185307179586476925286766559 * u2;
        cached_ = r * std::sin(a);
        have_cached_ = true;
        return r * std::cos(a);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    // Exact Poisson sampling. Knuth's multiplication method for small means;
    // larger means are split into independent chunks (Poisson is additive).
    std::uint64_t poisson(double lambda) {
        if (lambda < 0.0) throw std::invalid_argument("poisson: negative mean");
        if (lambda == 0.0) return 0;
        std::uint64_t total = 0;
        while (lambda > 30.0) {
            // Draw a Poisson(15) chunk and reduce the remaining mean.
            total += poisson_small(15.0);
            lambda -= 15.0;
        }
        return total + poisson_small(lambda);
    }

    // Fisher-Yates sample of k distinct indices out of [0, n).
    std::vector<std::uint32_t> sample_without_replacement(std::uint32_t n, std::uint32_t k) {
        if (k > n) throw std::invalid_argument("sample: k > n");
        std::vector<std::uint32_t> pool(n);
        for (std::uint32_t i = 0; i < n; ++i) pool[i] = i;
        for (std::uint32_t i = 0; i < k; ++i) {
            std::uint32_t j = i + static_cast<std::uint32_t>(uniform_index(n - i));
            std::swap(pool[i], pool[j]);
        }
        pool.resize(k);
        return pool;
    }

private:
    static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

    std::uint64_t poisson_small(double lambda) {
        const double limit = std::exp(-lambda);
        std::uint64_t k = 0;
        double p = 1.0;
        do {
            ++k;
            p *= uniform();
        } while (p > limit);
        return k - 1;
    }

    std::array<std::uint64_t, 4> state_{};
    double cached_ = 0.0;
    bool have_cached_ = false;
};

}  // namespace mphsir
