// SPDX-License-Identifier: Apache-2.0
#pragma once

// Receive-side impairment chain: clock drift -> multipath fading -> carrier
// offset -> additive noise. Each stage draws from its own sub-stream of the
// caller's seed, so a signal's channel is reproducible in isolation.

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>
#include <vector>

#include "modrec/error.hpp"
#include "modrec/iqcore.hpp"
#include "modrec/rng.hpp"

namespace modrec {

struct ChannelParams {
    double cfo_walk_std = 1e-4;  ///< rad/sample per-sample step of the phase-rate walk
    double cfo_init_max = 0.01;  ///< cycles/sample, initial offset ~ U(-max, max)
    double clk_walk_std = 1e-6;  ///< per-sample step of the resampling-ratio walk
    double clk_init_max = 5e-5;  ///< initial ratio offset ~ U(-max, max)
    std::size_t n_taps = 4;
    double pdp_decay = 1.5;      ///< tap k power proportional to exp(-k / pdp_decay)
    double max_doppler = 0.001;  ///< cycles/sample
    double snr_db = 0.0;

    static constexpr std::size_t sinusoids_per_tap = 16;
    static constexpr double max_snr_db = 60.0;

    /// No drift, no fading, no carrier offset; only noise at snr_db.
    static ChannelParams clean(double snr_db) {
        ChannelParams p;
        p.cfo_walk_std = 0.0;
        p.cfo_init_max = 0.0;
        p.clk_walk_std = 0.0;
        p.clk_init_max = 0.0;
        p.n_taps = 1;
        p.max_doppler = 0.0;
        p.snr_db = snr_db;
        return p;
    }

    void validate() const {
        if (!(cfo_walk_std >= 0.0) || !(cfo_init_max >= 0.0) || !(clk_walk_std >= 0.0) || !(clk_init_max >= 0.0))
            throw ConfigError("channel deviations must be non-negative");
        if (clk_init_max >= 0.5) throw ConfigError("clk_init_max must be < 0.5");
        if (n_taps < 1) throw ConfigError("n_taps must be >= 1");
        if (!(pdp_decay > 0.0)) throw ConfigError("pdp_decay must be > 0");
        if (!(max_doppler >= 0.0 && max_doppler < 0.5)) throw ConfigError("max_doppler must be in [0, 0.5)");
        if (!std::isfinite(snr_db) || snr_db > max_snr_db) throw ConfigError("snr_db must be finite and <= 60");
    }
};

/// Dataset SNR labels: -20, -18, ..., +20 dB.
inline constexpr std::array<int, 21> snr_levels = {-20, -18, -16, -14, -12, -10, -8, -6, -4, -2, 0,
                                                   2,   4,   6,   8,   10,  12,  14,  16,  18,  20};

constexpr bool is_snr_level(int snr_db) noexcept {
    return snr_db >= -20 && snr_db <= 20 && snr_db % 2 == 0;
}

constexpr std::size_t snr_index(int snr_db) noexcept { return static_cast<std::size_t>((snr_db + 20) / 2); }

/// What the channel drew; filled on request for calibration and tests.
struct ChannelTrace {
    double cfo_initial = 0.0;    ///< cycles/sample
    double clock_ratio_initial = 1.0;
    std::vector<Cpx> static_taps;  ///< realized taps when max_doppler == 0
    double signal_power = 0.0;   ///< mean power entering the noise stage
    double noise_variance = 0.0;
    Signal noise;
};

/// y[t] = x[t] exp(j phi[t]); phi integrates a phase rate that starts uniform
/// in +/- 2 pi cfo_init_max and random-walks with step cfo_walk_std.
inline Signal apply_cfo(std::span<const Cpx> x, const ChannelParams& p, SeedSpec seed, ChannelTrace* trace = nullptr) {
    Rng rng(seed);
    const double f0 = rng.uniform(-p.cfo_init_max, p.cfo_init_max);
    if (trace) trace->cfo_initial = f0;
    double rate = 2.0 * std::numbers::pi * f0;
    double phase = 0.0;
    Signal y(x.size());
    for (std::size_t t = 0; t < x.size(); ++t) {
        y[t] = x[t] * std::polar(1.0, phase);
        phase = std::remainder(phase + rate, 2.0 * std::numbers::pi);
        if (p.cfo_walk_std > 0.0) rate += p.cfo_walk_std * rng.gaussian();
    }
    return y;
}

/// Four-point Lagrange interpolation of x at fractional index pos. Exact for
/// cubic sequences; returns x[i] untouched when pos is integral. The left edge
/// replicates x[0].
inline Cpx cubic_interpolate(std::span<const Cpx> x, double pos) {
    const double fl = std::floor(pos);
    if (fl < 0.0) throw Error("insufficient input margin");
    const auto i = static_cast<std::size_t>(fl);
    const double mu = pos - fl;
    if (mu == 0.0) {
        if (i >= x.size()) throw Error("insufficient input margin");
        return x[i];
    }
    if (i + 2 >= x.size()) throw Error("insufficient input margin");
    const Cpx xm1 = i == 0 ? x[0] : x[i - 1];
    const double wm1 = -mu * (mu - 1.0) * (mu - 2.0) / 6.0;
    const double w0 = (mu + 1.0) * (mu - 1.0) * (mu - 2.0) / 2.0;
    const double w1 = -(mu + 1.0) * mu * (mu - 2.0) / 2.0;
    const double w2 = (mu + 1.0) * mu * (mu - 1.0) / 6.0;
    return wm1 * xm1 + w0 * x[i] + w1 * x[i + 1] + w2 * x[i + 2];
}

/// Resamples x at positions tau[t], tau[0] = 0, tau[t+1] = tau[t] + r[t], with
/// r starting at 1 + U(-clk_init_max, clk_init_max) and walking by clk_walk_std.
inline Signal apply_clock_drift(std::span<const Cpx> x, const ChannelParams& p, SeedSpec seed, std::size_t n_out,
                                ChannelTrace* trace = nullptr) {
    Rng rng(seed);
    double ratio = 1.0 + rng.uniform(-p.clk_init_max, p.clk_init_max);
    if (trace) trace->clock_ratio_initial = ratio;
    Signal y(n_out);
    double pos = 0.0;
    for (std::size_t t = 0; t < n_out; ++t) {
        y[t] = cubic_interpolate(x, pos);
        pos += ratio;
        if (p.clk_walk_std > 0.0) ratio += p.clk_walk_std * rng.gaussian();
    }
    return y;
}

/// Normalized power-delay profile, sums to one.
inline std::vector<double> power_delay_profile(const ChannelParams& p) {
    std::vector<double> pdp(p.n_taps);
    double total = 0.0;
    for (std::size_t k = 0; k < p.n_taps; ++k) {
        pdp[k] = std::exp(-static_cast<double>(k) / p.pdp_decay);
        total += pdp[k];
    }
    for (double& v : pdp) v /= total;
    return pdp;
}

/// Time-varying Rayleigh taps, one row per tap, each a sum of 16 complex
/// sinusoids with Doppler max_doppler*cos(alpha) and uniform phases.
///
/// Static channels (max_doppler == 0) are power-normalized per realization,
/// and a static single-tap channel is the identity.
inline std::vector<Signal> fading_taps(std::size_t n, const ChannelParams& p, SeedSpec seed) {
    using std::numbers::pi;
    constexpr std::size_t m = ChannelParams::sinusoids_per_tap;
    if (p.n_taps < 1) throw Error("n_taps must be >= 1");
    std::vector<Signal> taps(p.n_taps, Signal(n));
    if (p.n_taps == 1 && p.max_doppler == 0.0) {
        for (Cpx& v : taps[0]) v = 1.0;
        return taps;
    }
    const std::vector<double> pdp = power_delay_profile(p);
    Rng rng(seed);
    for (std::size_t k = 0; k < p.n_taps; ++k) {
        std::array<Cpx, m> phasor{};
        std::array<Cpx, m> step{};
        for (std::size_t s = 0; s < m; ++s) {
            const double alpha = rng.uniform(0.0, 2.0 * pi);
            const double phi = rng.uniform(0.0, 2.0 * pi);
            phasor[s] = std::polar(1.0, phi);
            step[s] = std::polar(1.0, 2.0 * pi * p.max_doppler * std::cos(alpha));
        }
        const double amp = std::sqrt(pdp[k] / static_cast<double>(m));
        for (std::size_t t = 0; t < n; ++t) {
            Cpx acc{};
            for (std::size_t s = 0; s < m; ++s) {
                acc += phasor[s];
                phasor[s] *= step[s];
            }
            taps[k][t] = amp * acc;
            if ((t & 255u) == 255u)
                for (Cpx& ph : phasor) ph /= std::abs(ph);
        }
    }
    if (p.max_doppler == 0.0) {
        double total = 0.0;
        for (const Signal& tap : taps) total += std::norm(tap[0]);
        const double g = total > 0.0 ? 1.0 / std::sqrt(total) : 1.0;
        for (Signal& tap : taps)
            for (Cpx& v : tap) v *= g;
    }
    return taps;
}

/// y[t] = sum_k h_k[t] x[t - k], with x[t] = 0 for t < 0.
inline Signal apply_fading(std::span<const Cpx> x, const ChannelParams& p, SeedSpec seed, ChannelTrace* trace = nullptr) {
    const std::vector<Signal> taps = fading_taps(x.size(), p, seed);
    if (trace && p.max_doppler == 0.0 && !x.empty()) {
        trace->static_taps.clear();
        for (const Signal& tap : taps) trace->static_taps.push_back(tap[0]);
    }
    Signal y(x.size());
    for (std::size_t t = 0; t < x.size(); ++t) {
        Cpx acc{};
        for (std::size_t k = 0; k < taps.size() && k <= t; ++k) acc += taps[k][t] * x[t - k];
        y[t] = acc;
    }
    return y;
}

/// Adds circular white Gaussian noise with variance mean_power(x) * 10^(-snr/10).
inline Signal add_awgn(std::span<const Cpx> x, double snr_db, SeedSpec seed, ChannelTrace* trace = nullptr) {
    if (!std::isfinite(snr_db) || snr_db > ChannelParams::max_snr_db)
        throw Error("snr_db must be finite and <= 60 dB");
    const double ps = mean_power(x);
    if (!(ps > 0.0)) throw Error("cannot set SNR on a zero-power signal");
    const double var = ps * std::pow(10.0, -snr_db / 10.0);
    Signal noise = gaussian_iq_noise(x.size(), var, seed);
    Signal y(x.size());
    for (std::size_t t = 0; t < x.size(); ++t) y[t] = x[t] + noise[t];
    if (trace) {
        trace->signal_power = ps;
        trace->noise_variance = var;
        trace->noise = std::move(noise);
    }
    return y;
}

/// Input samples needed for apply_channel to emit n_out samples.
inline std::size_t required_input_length(const ChannelParams& p, std::size_t n_out) {
    const double n = static_cast<double>(n_out + p.n_taps);
    const double drift = n * p.clk_init_max + 10.0 * p.clk_walk_std * std::pow(n, 1.5);
    return n_out + p.n_taps + 16 + static_cast<std::size_t>(std::ceil(drift * 1.5 + 2.0));
}

/// Full chain: clock drift -> fading -> CFO -> AWGN, emitting n_out samples.
/// The fading transient (n_taps - 1 samples) is resampled and discarded.
inline Signal apply_channel(std::span<const Cpx> x, const ChannelParams& p, SeedSpec seed, std::size_t n_out,
                            ChannelTrace* trace = nullptr) {
    p.validate();
    const std::size_t lead = p.n_taps - 1;
    const Signal drifted = apply_clock_drift(x, p, seed.derive(stream::clock), n_out + lead, trace);
    Signal faded = apply_fading(drifted, p, seed.derive(stream::fading), trace);
    faded.erase(faded.begin(), faded.begin() + static_cast<std::ptrdiff_t>(lead));
    const Signal rotated = apply_cfo(faded, p, seed.derive(stream::cfo), trace);
    return add_awgn(rotated, p.snr_db, seed.derive(stream::noise), trace);
}

} // namespace modrec
