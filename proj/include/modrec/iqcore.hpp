// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstddef>
#include <span>
#include <vector>

#include "modrec/error.hpp"
#include "modrec/rng.hpp"

namespace modrec {

using Cpx = std::complex<double>;
using Signal = std::vector<Cpx>;

inline bool is_finite(Cpx z) noexcept { return std::isfinite(z.real()) && std::isfinite(z.imag()); }

/// One classification window: exactly 128 finite complex samples.
class IqFrame {
public:
    static constexpr std::size_t length = 128;

    IqFrame() { samples_.fill(Cpx{}); }

    explicit IqFrame(std::span<const Cpx> x) {
        if (x.size() != length) throw Error("IqFrame requires exactly 128 samples");
        for (std::size_t i = 0; i < length; ++i) {
            if (!is_finite(x[i])) throw Error("IqFrame sample is not finite");
            samples_[i] = x[i];
        }
    }

    const Cpx& operator[](std::size_t i) const noexcept { return samples_[i]; }
    std::span<const Cpx> samples() const noexcept { return samples_; }
    std::size_t size() const noexcept { return length; }

    friend bool operator==(const IqFrame&, const IqFrame&) = default;

private:
    std::array<Cpx, length> samples_;
};

/// (1/N) * sum |x|^2.
inline double mean_power(std::span<const Cpx> x) {
    if (x.empty()) throw Error("empty signal");
    double acc = 0.0;
    for (const Cpx& z : x) acc += std::norm(z);
    return acc / static_cast<double>(x.size());
}

/// Scales x by one positive real so that its mean power is 1.
inline Signal normalize_power(std::span<const Cpx> x) {
    const double p = mean_power(x);
    if (!(p > 0.0)) throw Error("cannot normalize zero signal");
    const double g = 1.0 / std::sqrt(p);
    Signal out(x.size());
    std::transform(x.begin(), x.end(), out.begin(), [g](Cpx z) { return z * g; });
    return out;
}

/// Circular complex white Gaussian noise with E|n|^2 = variance.
inline Signal gaussian_iq_noise(std::size_t n, double variance, SeedSpec seed) {
    if (!(variance >= 0.0)) throw Error("noise variance must be non-negative");
    Signal out(n);
    if (variance == 0.0) return out;
    Rng rng(seed);
    const double sigma = std::sqrt(variance / 2.0);
    for (Cpx& z : out) {
        const double re = rng.gaussian();
        const double im = rng.gaussian();
        z = Cpx(sigma * re, sigma * im);
    }
    return out;
}

} // namespace modrec
