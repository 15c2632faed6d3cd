// SPDX-License-Identifier: Apache-2.0
#pragma once

// Portable seeded randomness.
//
// Every random draw in the library goes through Rng, a xoshiro256** generator
// whose 256-bit state is filled by splitmix64 from a (master_seed, stream_id)
// pair. Gaussian and shuffle routines are implemented here rather than taken
// from <random> because the standard distributions are not bit-specified and
// golden hashes must not depend on the standard library vendor.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>
#include <utility>

namespace modrec {

/// Identifies one independent random stream.
struct SeedSpec {
    std::uint64_t master_seed = 0;
    std::uint64_t stream_id = 0;

    /// Sub-stream for a fixed effect offset (< 64). Offsets stack, so a frame's
    /// noise stream is derive(frame).derive(noise) and regenerable on its own.
    constexpr SeedSpec derive(std::uint64_t offset) const noexcept {
        return {master_seed, (stream_id << 6) | (offset & 63u)};
    }

    friend constexpr bool operator==(const SeedSpec&, const SeedSpec&) = default;
};

/// Fixed sub-stream offsets used across modules.
namespace stream {
inline constexpr std::uint64_t source = 1;
inline constexpr std::uint64_t whitening = 2;
inline constexpr std::uint64_t timing = 3;
inline constexpr std::uint64_t clock = 8;
inline constexpr std::uint64_t fading = 9;
inline constexpr std::uint64_t cfo = 10;
inline constexpr std::uint64_t noise = 11;
inline constexpr std::uint64_t split = 16;
inline constexpr std::uint64_t shuffle = 17;
inline constexpr std::uint64_t init = 18;
inline constexpr std::uint64_t dropout = 19;
} // namespace stream

namespace detail {
constexpr std::uint64_t splitmix64(std::uint64_t& state) noexcept {
    std::uint64_t z = (state += 0x9E3779B97F4A7C15ull);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

constexpr std::uint64_t rotl(std::uint64_t x, int k) noexcept {
    return (x << k) | (x >> (64 - k));
}
} // namespace detail

class Rng {
public:
    using result_type = std::uint64_t;

    explicit Rng(SeedSpec seed) noexcept {
        std::uint64_t sm = seed.master_seed;
        std::uint64_t key = detail::splitmix64(sm);
        sm = key ^ (seed.stream_id * 0xD1B54A32D192ED03ull) ^ 0x2545F4914F6CDD1Dull;
        for (auto& s : s_) s = detail::splitmix64(sm);
    }

    static constexpr result_type min() noexcept { return 0; }
    static constexpr result_type max() noexcept { return ~result_type{0}; }

    result_type operator()() noexcept { return next(); }

    std::uint64_t next() noexcept {
        const std::uint64_t result = detail::rotl(s_[1] * 5, 7) * 9;
        const std::uint64_t t = s_[1] << 17;
        s_[2] ^= s_[0];
        s_[3] ^= s_[1];
        s_[1] ^= s_[2];
        s_[0] ^= s_[3];
        s_[2] ^= t;
        s_[3] = detail::rotl(s_[3], 45);
        return result;
    }

    /// Uniform in [0, 1) with 53 random bits.
    double uniform() noexcept { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, n). Rejection sampling, unbiased.
    std::uint64_t below(std::uint64_t n) noexcept {
        if (n <= 1) return 0;
        const std::uint64_t limit = max() - max() % n;
        std::uint64_t r;
        do {
            r = next();
        } while (r >= limit);
        return r % n;
    }

    bool bit() noexcept { return (next() >> 63) != 0; }

    /// Standard normal via Box-Muller; the second variate is cached.
    double gaussian() noexcept {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = 0.0;
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 2.0 * std::numbers::pi * u2;
        spare_ = r * std::sin(theta);
        has_spare_ = true;
        return r * std::cos(theta);
    }

    template <typename T>
    void shuffle(std::span<T> v) noexcept {
        for (std::size_t i = v.size(); i > 1; --i) {
            const auto j = static_cast<std::size_t>(below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    std::uint64_t s_[4]{};
    double spare_ = 0.0;
    bool has_spare_ = false;
};

} // namespace modrec
