// SPDX-License-Identifier: Apache-2.0
#pragma once

// Clean baseband modulators for the eleven recognition classes.

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "modrec/error.hpp"
#include "modrec/iqcore.hpp"
#include "modrec/rng.hpp"

namespace modrec {

using Bits = std::vector<std::uint8_t>;

enum class ModClass : std::uint16_t {
    BPSK = 0,
    QPSK = 1,
    PSK8 = 2,
    QAM16 = 3,
    QAM64 = 4,
    GFSK_BFSK = 5,
    CPFSK = 6,
    PAM4 = 7,
    WBFM = 8,
    AM_SSB = 9,
    AM_DSB = 10,
};

inline constexpr std::size_t num_classes = 11;

inline constexpr std::array<ModClass, num_classes> all_classes = {
    ModClass::BPSK,  ModClass::QPSK,      ModClass::PSK8,  ModClass::QAM16,
    ModClass::QAM64, ModClass::GFSK_BFSK, ModClass::CPFSK, ModClass::PAM4,
    ModClass::WBFM,  ModClass::AM_SSB,    ModClass::AM_DSB,
};

inline constexpr std::array<std::string_view, num_classes> class_names = {
    "BPSK", "QPSK", "8PSK", "QAM16", "QAM64", "BFSK", "CPFSK", "PAM4", "WBFM", "AM-SSB", "AM-DSB",
};

constexpr std::size_t class_id(ModClass c) noexcept { return static_cast<std::size_t>(c); }

inline std::string_view class_name(ModClass c) { return class_names.at(class_id(c)); }

inline std::optional<ModClass> parse_class(std::string_view name) {
    for (std::size_t i = 0; i < num_classes; ++i)
        if (class_names[i] == name) return all_classes[i];
    return std::nullopt;
}

inline ModClass class_from_id(std::size_t id) {
    if (id >= num_classes) throw Error("class id out of range: " + std::to_string(id));
    return all_classes[id];
}

/// Classes produced by a symbol mapper followed by the RRC pulse shaper.
constexpr bool is_linear_digital(ModClass c) noexcept {
    switch (c) {
    case ModClass::BPSK:
    case ModClass::QPSK:
    case ModClass::PSK8:
    case ModClass::QAM16:
    case ModClass::QAM64:
    case ModClass::PAM4: return true;
    default: return false;
    }
}

constexpr bool is_fsk(ModClass c) noexcept {
    return c == ModClass::GFSK_BFSK || c == ModClass::CPFSK;
}

constexpr bool is_analog(ModClass c) noexcept {
    return c == ModClass::WBFM || c == ModClass::AM_SSB || c == ModClass::AM_DSB;
}

constexpr std::size_t bits_per_symbol(ModClass c) noexcept {
    switch (c) {
    case ModClass::BPSK: return 1;
    case ModClass::QPSK: return 2;
    case ModClass::PSK8: return 3;
    case ModClass::QAM16: return 4;
    case ModClass::QAM64: return 6;
    case ModClass::PAM4: return 2;
    case ModClass::GFSK_BFSK:
    case ModClass::CPFSK: return 1;
    default: return 0;
    }
}

struct ModemConfig {
    std::size_t sps = 8;
    double rrc_beta = 0.35;
    std::size_t rrc_span = 11;
    double fsk_mod_index = 0.5;
    /// Peak FM deviation as a fraction of Nyquist.
    double fm_deviation = 0.375;
    double am_depth = 0.8;
    std::size_t hilbert_taps = 129;
    /// Audio silence: silence_len zero samples every silence_period samples.
    std::size_t silence_period = 2560;
    std::size_t silence_len = 256;

    void validate() const {
        if (sps < 2) throw ConfigError("sps must be >= 2");
        if (!(rrc_beta >= 0.0 && rrc_beta <= 1.0)) throw ConfigError("rrc_beta must be in [0, 1]");
        if (rrc_span < 4) throw ConfigError("rrc_span must be >= 4 symbols");
        if ((rrc_span * sps) % 2 != 0) throw ConfigError("rrc_span * sps must be even");
        if (!(fsk_mod_index > 0.0)) throw ConfigError("fsk_mod_index must be > 0");
        if (!(fm_deviation > 0.0 && fm_deviation <= 1.0)) throw ConfigError("fm_deviation must be in (0, 1]");
        if (!(am_depth >= 0.0 && am_depth <= 1.0)) throw ConfigError("am_depth must be in [0, 1]");
        if (hilbert_taps < 3 || hilbert_taps % 2 == 0) throw ConfigError("hilbert_taps must be odd and >= 3");
        if (silence_period == 0 || silence_len >= silence_period)
            throw ConfigError("silence_len must be < silence_period");
    }
};

// ---------------------------------------------------------------------------
// Payload whitening

/// Maximal-length x^15 + x^14 + 1 sequence (period 32767) starting from a
/// seed-derived non-zero state.
inline Bits scrambler_sequence(std::size_t n, SeedSpec seed) {
    Rng rng(seed);
    auto state = static_cast<std::uint16_t>(rng.below(0x7FFF) + 1);
    Bits out(n);
    for (std::size_t i = 0; i < n; ++i) {
        const std::uint16_t fb = ((state >> 14) ^ (state >> 13)) & 1u;
        out[i] = static_cast<std::uint8_t>(fb);
        state = static_cast<std::uint16_t>(((state << 1) | fb) & 0x7FFF);
    }
    return out;
}

/// XOR with the scrambler stream; applying it twice restores the input.
inline Bits whiten_bits(std::span<const std::uint8_t> bits, SeedSpec seed) {
    const Bits seq = scrambler_sequence(bits.size(), seed);
    Bits out(bits.size());
    for (std::size_t i = 0; i < bits.size(); ++i) out[i] = static_cast<std::uint8_t>((bits[i] & 1u) ^ seq[i]);
    return out;
}

// ---------------------------------------------------------------------------
// Symbol mapping

namespace detail {
constexpr unsigned gray_decode(unsigned g) noexcept {
    unsigned b = g;
    for (unsigned s = g >> 1; s != 0; s >>= 1) b ^= s;
    return b;
}

inline unsigned read_bits(std::span<const std::uint8_t> bits, std::size_t pos, std::size_t n) {
    unsigned v = 0;
    for (std::size_t i = 0; i < n; ++i) v = (v << 1) | (bits[pos + i] & 1u);
    return v;
}

inline double pam_level(unsigned gray, unsigned levels) {
    const unsigned k = gray_decode(gray);
    return 2.0 * static_cast<double>(k) - static_cast<double>(levels - 1);
}
} // namespace detail

/// Single symbol for a Gray-coded label (MSB first). Unit average energy.
inline Cpx constellation_point(ModClass cls, unsigned label) {
    using std::numbers::pi;
    switch (cls) {
    case ModClass::BPSK: return (label & 1u) ? Cpx(-1.0, 0.0) : Cpx(1.0, 0.0);
    case ModClass::QPSK:
    case ModClass::PSK8: {
        const unsigned m = cls == ModClass::QPSK ? 4 : 8;
        const double k = detail::gray_decode(label);
        return std::polar(1.0, pi * (2.0 * k + 1.0) / m);
    }
    case ModClass::QAM16:
    case ModClass::QAM64: {
        const unsigned half = cls == ModClass::QAM16 ? 2 : 3;
        const unsigned side = 1u << half;
        const double scale = std::sqrt(2.0 * (side * side - 1.0) / 3.0);
        const unsigned i_bits = label >> half;
        const unsigned q_bits = label & (side - 1);
        return Cpx(detail::pam_level(i_bits, side), detail::pam_level(q_bits, side)) / scale;
    }
    case ModClass::PAM4: return Cpx(detail::pam_level(label, 4) / std::sqrt(5.0), 0.0);
    default: throw Error("not a symbol-mapped class");
    }
}

inline Signal map_symbols(ModClass cls, std::span<const std::uint8_t> bits) {
    if (!is_linear_digital(cls)) throw Error("not a symbol-mapped class");
    const std::size_t k = bits_per_symbol(cls);
    if (bits.size() % k != 0) throw Error("bit count not divisible by bits per symbol");
    Signal out(bits.size() / k);
    for (std::size_t s = 0; s < out.size(); ++s)
        out[s] = constellation_point(cls, detail::read_bits(bits, s * k, k));
    return out;
}

// ---------------------------------------------------------------------------
// Root-raised-cosine pulse

/// Closed-form RRC impulse response, length span*sps+1, unit energy. The
/// removable singularities at t = 0 and |t| = 1/(4 beta) use their limits.
inline std::vector<double> rrc_prototype(double beta, std::size_t sps, std::size_t span) {
    using std::numbers::pi;
    if (!(beta >= 0.0 && beta <= 1.0)) throw Error("rrc beta must be in [0, 1]");
    if (sps == 0 || span == 0) throw Error("rrc sps and span must be positive");
    const std::size_t len = span * sps + 1;
    const double center = static_cast<double>(span * sps) / 2.0;
    std::vector<double> h(len);
    for (std::size_t i = 0; i < len; ++i) {
        const double t = (static_cast<double>(i) - center) / static_cast<double>(sps);
        if (std::abs(t) < 1e-12) {
            h[i] = 1.0 - beta + 4.0 * beta / pi;
        } else if (beta > 0.0 && std::abs(std::abs(4.0 * beta * t) - 1.0) < 1e-12) {
            h[i] = beta / std::sqrt(2.0) *
                   ((1.0 + 2.0 / pi) * std::sin(pi / (4.0 * beta)) + (1.0 - 2.0 / pi) * std::cos(pi / (4.0 * beta)));
        } else {
            const double num = std::sin(pi * t * (1.0 - beta)) + 4.0 * beta * t * std::cos(pi * t * (1.0 + beta));
            const double den = pi * t * (1.0 - (4.0 * beta * t) * (4.0 * beta * t));
            h[i] = num / den;
        }
    }
    double energy = 0.0;
    for (double v : h) energy += v * v;
    const double g = 1.0 / std::sqrt(energy);
    for (double& v : h) v *= g;
    return h;
}

/// RRC taps whose self-convolution is Nyquist at symbol spacing.
///
/// Truncating the closed form to a finite span leaves residual ISI in the
/// matched-filter output (about 3e-3 of peak at beta 0.35, span 11). The
/// prototype is projected onto the set {h : sum_n h[n] h[n + k sps] = 0, k != 0}
/// with minimum-norm Gauss-Newton steps, keeping it symmetric, then
/// renormalized to unit energy.
inline std::vector<double> rrc_taps(double beta, std::size_t sps, std::size_t span) {
    std::vector<double> h = rrc_prototype(beta, sps, span);
    const std::size_t len = h.size();
    const std::size_t lags = (len - 1) / sps;
    if (lags == 0) return h;

    Eigen::Map<Eigen::VectorXd> hv(h.data(), static_cast<Eigen::Index>(len));
    Eigen::VectorXd r(static_cast<Eigen::Index>(lags));
    Eigen::MatrixXd jac(static_cast<Eigen::Index>(lags), static_cast<Eigen::Index>(len));
    for (int iter = 0; iter < 50; ++iter) {
        jac.setZero();
        for (std::size_t k = 1; k <= lags; ++k) {
            const std::size_t s = k * sps;
            double acc = 0.0;
            for (std::size_t n = 0; n + s < len; ++n) {
                acc += h[n] * h[n + s];
                jac(static_cast<Eigen::Index>(k - 1), static_cast<Eigen::Index>(n)) += h[n + s];
                jac(static_cast<Eigen::Index>(k - 1), static_cast<Eigen::Index>(n + s)) += h[n];
            }
            r(static_cast<Eigen::Index>(k - 1)) = acc;
        }
        if (r.cwiseAbs().maxCoeff() < 1e-14) break;
        const Eigen::MatrixXd gram = jac * jac.transpose();
        const Eigen::VectorXd step = jac.transpose() * gram.ldlt().solve(r);
        hv -= step;
        for (std::size_t i = 0; i < len / 2; ++i) {
            const double m = 0.5 * (h[i] + h[len - 1 - i]);
            h[i] = m;
            h[len - 1 - i] = m;
        }
    }
    hv /= hv.norm();
    return h;
}

/// Zero-stuffs by sps and convolves with the RRC taps. Output length is
/// symbols.size()*sps + span*sps; symbol k peaks at k*sps + span*sps/2.
inline Signal pulse_shape(std::span<const Cpx> symbols, const ModemConfig& cfg) {
    if (symbols.empty()) throw Error("pulse_shape requires at least one symbol");
    const std::vector<double> taps = rrc_taps(cfg.rrc_beta, cfg.sps, cfg.rrc_span);
    Signal out(symbols.size() * cfg.sps + taps.size() - 1);
    for (std::size_t k = 0; k < symbols.size(); ++k) {
        const Cpx s = symbols[k];
        if (s == Cpx{}) continue;
        Cpx* dst = out.data() + k * cfg.sps;
        for (std::size_t j = 0; j < taps.size(); ++j) dst[j] += s * taps[j];
    }
    return out;
}

// ---------------------------------------------------------------------------
// Frequency-shift keying

/// Tone offset in cycles/sample for the configured modulation index.
inline double fsk_deviation(const ModemConfig& cfg) {
    return cfg.fsk_mod_index / (2.0 * static_cast<double>(cfg.sps));
}

/// Binary FSK, sps samples per bit, tones at +/- fsk_deviation. CPFSK keeps
/// one continuous phase accumulator. BFSK switches between two free-running
/// oscillators that start in phase; at every odd symbol boundary they are pi
/// apart, so the phase jumps whenever the bit changes there.
inline Signal modulate_fsk(ModClass cls, std::span<const std::uint8_t> bits, const ModemConfig& cfg) {
    using std::numbers::pi;
    if (!is_fsk(cls)) throw Error("not an FSK class");
    const double dw = 2.0 * pi * fsk_deviation(cfg);
    Signal out;
    out.reserve(bits.size() * cfg.sps);
    if (cls == ModClass::CPFSK) {
        double phase = 0.0;
        for (std::uint8_t b : bits) {
            const double step = (b & 1u) ? dw : -dw;
            for (std::size_t i = 0; i < cfg.sps; ++i) {
                out.push_back(std::polar(1.0, phase));
                phase = std::remainder(phase + step, 2.0 * pi);
            }
        }
    } else {
        double hi = 0.0;
        double lo = 0.0;
        for (std::uint8_t b : bits) {
            for (std::size_t i = 0; i < cfg.sps; ++i) {
                out.push_back(std::polar(1.0, (b & 1u) ? hi : lo));
                hi = std::remainder(hi + dw, 2.0 * pi);
                lo = std::remainder(lo - dw, 2.0 * pi);
            }
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Synthetic payload sources

/// Pseudorandom payload bits, whitened by the block scrambler.
inline Bits synth_bits(std::size_t n, SeedSpec seed) {
    if (n == 0) throw Error("source length must be positive");
    Rng rng(seed);
    Bits raw(n);
    for (auto& b : raw) b = rng.bit() ? 1 : 0;
    return whiten_bits(raw, seed.derive(stream::whitening));
}

namespace detail {
/// Windowed-sinc band-pass between lo and hi (cycles/sample), odd length.
inline std::vector<double> bandpass_taps(double lo, double hi, std::size_t len) {
    using std::numbers::pi;
    std::vector<double> h(len);
    const double c = static_cast<double>(len - 1) / 2.0;
    for (std::size_t i = 0; i < len; ++i) {
        const double t = static_cast<double>(i) - c;
        const double ideal = t == 0.0 ? 2.0 * (hi - lo)
                                      : (std::sin(2.0 * pi * hi * t) - std::sin(2.0 * pi * lo * t)) / (pi * t);
        const double w = 0.54 - 0.46 * std::cos(2.0 * pi * static_cast<double>(i) / static_cast<double>(len - 1));
        h[i] = ideal * w;
    }
    return h;
}
} // namespace detail

/// Audio-like real source in [-1, 1]: band-pass filtered noise plus two
/// incommensurate tones with seeded phases, hard-limited, with a silent gap of
/// cfg.silence_len samples in every cfg.silence_period. Sources no longer than
/// two gaps carry none, so a short signal is never entirely silent.
inline std::vector<double> synth_audio(std::size_t n, SeedSpec seed, const ModemConfig& cfg = {}) {
    using std::numbers::pi;
    if (n == 0) throw Error("source length must be positive");
    Rng rng(seed);
    const std::vector<double> taps = detail::bandpass_taps(0.01, 0.06, 101);
    double gain = 0.0;
    for (double t : taps) gain += t * t;
    // white N(0,1) through the filter has variance sum(taps^2)
    const double noise_scale = 0.2 / std::sqrt(gain);

    std::vector<double> white(n + taps.size() - 1);
    for (double& w : white) w = rng.gaussian();

    const double f1 = 0.0213;
    const double f2 = f1 * std::numbers::phi;
    const double p1 = rng.uniform(0.0, 2.0 * pi);
    const double p2 = rng.uniform(0.0, 2.0 * pi);
    const std::size_t gap_start = static_cast<std::size_t>(rng.below(cfg.silence_period));
    const bool gaps = n > 2 * cfg.silence_len;

    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        double acc = 0.0;
        for (std::size_t j = 0; j < taps.size(); ++j) acc += taps[j] * white[i + j];
        const double t = static_cast<double>(i);
        double v = noise_scale * acc + 0.3 * std::sin(2.0 * pi * f1 * t + p1) + 0.2 * std::sin(2.0 * pi * f2 * t + p2);
        const std::size_t phase = (i + cfg.silence_period - gap_start) % cfg.silence_period;
        if (gaps && phase < cfg.silence_len) v = 0.0;
        out[i] = std::clamp(v, -1.0, 1.0);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Analog modulation

/// Odd-length, Hamming-windowed ideal Hilbert transformer.
inline std::vector<double> hilbert_taps(std::size_t len) {
    using std::numbers::pi;
    if (len < 3 || len % 2 == 0) throw Error("hilbert length must be odd and >= 3");
    std::vector<double> h(len, 0.0);
    const auto c = static_cast<std::ptrdiff_t>(len / 2);
    for (std::size_t i = 0; i < len; ++i) {
        const std::ptrdiff_t k = static_cast<std::ptrdiff_t>(i) - c;
        if (k % 2 == 0) continue;
        const double w = 0.54 - 0.46 * std::cos(2.0 * pi * static_cast<double>(i) / static_cast<double>(len - 1));
        h[i] = 2.0 / (pi * static_cast<double>(k)) * w;
    }
    return h;
}

/// WBFM, AM-SSB (upper sideband, suppressed carrier) or AM-DSB (with carrier).
/// Output has the same length as the audio; the SSB branch aligns the delayed
/// audio with the Hilbert branch and zero-pads at the edges.
inline Signal modulate_analog(ModClass cls, std::span<const double> audio, const ModemConfig& cfg) {
    using std::numbers::pi;
    if (!is_analog(cls)) throw Error("not an analog class");
    Signal out(audio.size());
    switch (cls) {
    case ModClass::WBFM: {
        const double k = 2.0 * pi * cfg.fm_deviation * 0.5;
        double phase = 0.0;
        for (std::size_t i = 0; i < audio.size(); ++i) {
            phase = std::remainder(phase + k * audio[i], 2.0 * pi);
            out[i] = std::polar(1.0, phase);
        }
        break;
    }
    case ModClass::AM_DSB:
        for (std::size_t i = 0; i < audio.size(); ++i) out[i] = Cpx(1.0 + cfg.am_depth * audio[i], 0.0);
        break;
    case ModClass::AM_SSB: {
        const std::vector<double> h = hilbert_taps(cfg.hilbert_taps);
        const auto half = static_cast<std::ptrdiff_t>(h.size() / 2);
        const auto n = static_cast<std::ptrdiff_t>(audio.size());
        for (std::ptrdiff_t i = 0; i < n; ++i) {
            double q = 0.0;
            for (std::ptrdiff_t j = 0; j < static_cast<std::ptrdiff_t>(h.size()); ++j) {
                if (h[static_cast<std::size_t>(j)] == 0.0) continue;
                const std::ptrdiff_t src = i + half - j;
                if (src >= 0 && src < n) q += h[static_cast<std::size_t>(j)] * audio[static_cast<std::size_t>(src)];
            }
            out[static_cast<std::size_t>(i)] = Cpx(audio[static_cast<std::size_t>(i)], q);
        }
        break;
    }
    default: break;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Full transmitter

struct GeneratedSignal {
    Signal samples;            ///< unit mean power, exactly the requested length
    Bits bits;                 ///< payload bits (digital classes)
    Signal symbols;            ///< mapped symbols (linear digital classes)
    double gain = 1.0;         ///< scale applied by the final power normalization
    std::size_t first_symbol = 0;  ///< index into symbols of the first peak inside samples
    std::size_t first_peak = 0;    ///< sample index of that peak
};

/// source -> mapper or analog modulator -> RRC (linear classes) -> unit power.
/// A seeded integer timing offset in [0, sps) is applied before trimming.
inline GeneratedSignal generate_signal_detailed(ModClass cls, std::size_t n_samples, const ModemConfig& cfg,
                                                SeedSpec seed) {
    cfg.validate();
    if (n_samples < IqFrame::length) throw Error("generate_signal requires at least 128 samples");
    const std::size_t sps = cfg.sps;
    Rng timing(seed.derive(stream::timing));
    const auto offset = static_cast<std::size_t>(timing.below(sps));

    GeneratedSignal g;
    Signal raw;
    if (is_linear_digital(cls)) {
        const std::size_t span = cfg.rrc_span;
        const std::size_t n_sym = (n_samples + offset + sps - 1) / sps + span + 2;
        g.bits = synth_bits(n_sym * bits_per_symbol(cls), seed.derive(stream::source));
        g.symbols = map_symbols(cls, g.bits);
        const Signal shaped = pulse_shape(g.symbols, cfg);
        const std::size_t start = span * sps + offset;
        raw.assign(shaped.begin() + static_cast<std::ptrdiff_t>(start),
                   shaped.begin() + static_cast<std::ptrdiff_t>(start + n_samples));
        const std::size_t delay = span * sps / 2;
        g.first_symbol = (start - delay + sps - 1) / sps;
        g.first_peak = g.first_symbol * sps + delay - start;
    } else if (is_fsk(cls)) {
        const std::size_t n_sym = (n_samples + offset + sps - 1) / sps + 1;
        g.bits = synth_bits(n_sym, seed.derive(stream::source));
        const Signal x = modulate_fsk(cls, g.bits, cfg);
        raw.assign(x.begin() + static_cast<std::ptrdiff_t>(offset),
                   x.begin() + static_cast<std::ptrdiff_t>(offset + n_samples));
    } else {
        const std::size_t pad = cfg.hilbert_taps;
        const std::vector<double> audio = synth_audio(n_samples + 2 * pad, seed.derive(stream::source), cfg);
        const Signal x = modulate_analog(cls, audio, cfg);
        raw.assign(x.begin() + static_cast<std::ptrdiff_t>(pad),
                   x.begin() + static_cast<std::ptrdiff_t>(pad + n_samples));
    }
    g.gain = 1.0 / std::sqrt(mean_power(raw));
    g.samples = normalize_power(raw);
    return g;
}

inline Signal generate_signal(ModClass cls, std::size_t n_samples, const ModemConfig& cfg, SeedSpec seed) {
    return generate_signal_detailed(cls, n_samples, cfg, seed).samples;
}

} // namespace modrec
