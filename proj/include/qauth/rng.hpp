#pragma once

#include <cstdint>
#include <algorithm>
#include <limits>
#include <numeric>
#include <vector>

namespace qauth {

inline constexpr std::uint64_t kGoldenGamma = 0x9E3779B97F4A7C15ULL;

// splitmix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
    z ^= z >> 30;
    z *= 0xBF58476D1CE4E5B9ULL;
    z ^= z >> 27;
    z *= 0x94D049BB133111EBULL;
    z ^= z >> 31;
    return z;
}

// Per-trial random stream. A splitmix64 generator: seeding is a single
// word, so millions of independent trials can each own a stream cheaply.
// Satisfies UniformRandomBitGenerator. The sampling helpers below are
// written out by hand because the std distributions are not guaranteed to
// produce the same sequence across standard library implementations.
class Rng {
public:
    using result_type = std::uint64_t;

    explicit constexpr Rng(std::uint64_t seed = 0) noexcept : state_(seed) {}

    // Stream for trial `index` of an experiment seeded with `master`.
    static constexpr Rng for_trial(std::uint64_t master, std::uint64_t index) noexcept {
        return Rng(mix64(master ^ index));
    }

    static constexpr result_type min() noexcept { return 0; }
    static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

    constexpr result_type operator()() noexcept {
        state_ += kGoldenGamma;
        return mix64(state_);
    }

    constexpr std::uint8_t bit() noexcept { return static_cast<std::uint8_t>((*this)() >> 63); }

    // Uniform in [0, 1) with 53 bits of resolution.
    constexpr double uniform() noexcept {
        return static_cast<double>((*this)() >> 11) * 0x1.0p-53;
    }

    constexpr bool bernoulli(double p) noexcept { return uniform() < p; }

    // Uniform integer in [0, bound). Lemire's multiply-shift with rejection.
    std::uint64_t below(std::uint64_t bound) noexcept {
        if (bound <= 1) return 0;
        unsigned __int128 m = static_cast<unsigned __int128>((*this)()) * bound;
        auto low = static_cast<std::uint64_t>(m);
        if (low < bound) {
            const std::uint64_t threshold = (0 - bound) % bound;
            while (low < threshold) {
                m = static_cast<unsigned __int128>((*this)()) * bound;
                low = static_cast<std::uint64_t>(m);
            }
        }
        return static_cast<std::uint64_t>(m >> 64);
    }

    constexpr std::uint64_t state() const noexcept { return state_; }

private:
    std::uint64_t state_;
};

// Uniform random `count`-subset of [0, n), returned sorted. Partial
// Fisher-Yates driven by Rng::below.
inline std::vector<std::uint32_t> sample_subset(std::uint32_t n, std::uint32_t count, Rng& rng) {
    std::vector<std::uint32_t> pool(n);
    std::iota(pool.begin(), pool.end(), 0u);
    for (std::uint32_t i = 0; i < count; ++i) {
        const auto j = i + static_cast<std::uint32_t>(rng.below(n - i));
        std::swap(pool[i], pool[j]);
    }
    pool.resize(count);
    std::sort(pool.begin(), pool.end());
    return pool;
}

}  // namespace qauth
