// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <numbers>
#include <numeric>

#include "modrec/modem.hpp"

using namespace modrec;
using std::numbers::pi;

namespace {

// Direct DFT magnitude at a normalized frequency (cycles/sample), Hann window.
double dft_mag(std::span<const Cpx> x, double f) {
    Cpx acc{};
    const double n = static_cast<double>(x.size());
    for (std::size_t t = 0; t < x.size(); ++t) {
        const double w = 0.5 - 0.5 * std::cos(2.0 * pi * static_cast<double>(t) / (n - 1.0));
        acc += w * x[t] * std::polar(1.0, -2.0 * pi * f * static_cast<double>(t));
    }
    return std::abs(acc);
}

double peak_frequency(std::span<const Cpx> x, double lo, double hi, double step) {
    double best_f = lo, best = -1.0;
    for (double f = lo; f <= hi; f += step) {
        const double m = dft_mag(x, f);
        if (m > best) {
            best = m;
            best_f = f;
        }
    }
    return best_f;
}

std::vector<double> correlate_taps(std::span<const double> a, std::span<const double> b) {
    std::vector<double> out(a.size() + b.size() - 1, 0.0);
    for (std::size_t i = 0; i < a.size(); ++i)
        for (std::size_t j = 0; j < b.size(); ++j) out[i + j] += a[i] * b[j];
    return out;
}

/// Matched-filter receiver at known timing; returns the hard-decided labels
/// and the largest distance between a filtered sample and its true symbol.
struct Loopback {
    std::size_t bit_errors = 0;
    std::size_t symbols_checked = 0;
    double max_symbol_error = 0.0;
};

Loopback matched_filter_loopback(ModClass cls, const GeneratedSignal& g, const ModemConfig& cfg) {
    const std::vector<double> taps = rrc_taps(cfg.rrc_beta, cfg.sps, cfg.rrc_span);
    const std::size_t half = taps.size() / 2;
    const std::size_t bps = bits_per_symbol(cls);
    Loopback r;
    for (std::size_t k = g.first_symbol;; ++k) {
        const std::size_t peak = g.first_peak + (k - g.first_symbol) * cfg.sps;
        if (peak + half >= g.samples.size()) break;
        if (peak < half) continue;
        Cpx z{};
        for (std::size_t j = 0; j < taps.size(); ++j) z += taps[j] * g.samples[peak - half + j];
        z /= g.gain;
        r.max_symbol_error = std::max(r.max_symbol_error, std::abs(z - g.symbols[k]));
        unsigned best = 0;
        double best_d = 1e300;
        for (unsigned label = 0; label < (1u << bps); ++label) {
            const double d = std::norm(z - constellation_point(cls, label));
            if (d < best_d) {
                best_d = d;
                best = label;
            }
        }
        for (std::size_t b = 0; b < bps; ++b) {
            const unsigned tx = g.bits[k * bps + b];
            const unsigned rx = (best >> (bps - 1 - b)) & 1u;
            r.bit_errors += tx != rx;
        }
        ++r.symbols_checked;
    }
    return r;
}

} // namespace

TEST(Whiten, InvolutionAndRawSequence) {
    Rng rng({5, 5});
    Bits b(5000);
    for (auto& v : b) v = rng.bit();
    EXPECT_EQ(whiten_bits(whiten_bits(b, {1, 2}), {1, 2}), b);
    const Bits zeros(777, 0);
    EXPECT_EQ(whiten_bits(zeros, {1, 2}), scrambler_sequence(777, {1, 2}));
}

TEST(Whiten, EquiprobableAndMaximalLength) {
    const Bits zeros(1'000'000, 0);
    const Bits w = whiten_bits(zeros, {11, 0});
    const double ones = static_cast<double>(std::count(w.begin(), w.end(), 1)) / w.size();
    EXPECT_GE(ones, 0.49);
    EXPECT_LE(ones, 0.51);
    const std::size_t period = 32767;
    for (std::size_t i = 0; i < 5000; ++i) ASSERT_EQ(w[i], w[i + period]);
    // no shorter period among the proper divisors of 32767 = 7 * 31 * 151
    for (std::size_t d : {7u, 31u, 151u, 217u, 1057u, 4681u}) {
        bool same = true;
        for (std::size_t i = 0; i < 2000 && same; ++i) same = w[i] == w[i + d];
        EXPECT_FALSE(same) << d;
    }
}

TEST(MapSymbols, QpskFollowsPhaseConvention) {
    const Signal s = map_symbols(ModClass::QPSK, Bits{0, 0});
    EXPECT_NEAR(s[0].real(), std::sqrt(0.5), 1e-12);
    EXPECT_NEAR(s[0].imag(), std::sqrt(0.5), 1e-12);
    // c_i -> pi (2 c_i + 1) / 4 after Gray decoding: 00, 01, 11, 10 walk the circle
    const Signal all = map_symbols(ModClass::QPSK, Bits{0, 0, 0, 1, 1, 1, 1, 0});
    for (int k = 0; k < 4; ++k) EXPECT_NEAR(std::abs(all[k] - std::polar(1.0, pi * (2 * k + 1) / 4)), 0.0, 1e-12);
}

TEST(MapSymbols, Bpsk) {
    const Signal s = map_symbols(ModClass::BPSK, Bits{0, 1});
    EXPECT_EQ(s[0], Cpx(1.0, 0.0));
    EXPECT_EQ(s[1], Cpx(-1.0, 0.0));
}

TEST(MapSymbols, UnitEnergyAndGrayAdjacency) {
    for (ModClass c : all_classes) {
        if (!is_linear_digital(c)) continue;
        const unsigned m = 1u << bits_per_symbol(c);
        std::vector<Cpx> pts(m);
        double energy = 0.0;
        for (unsigned l = 0; l < m; ++l) {
            pts[l] = constellation_point(c, l);
            energy += std::norm(pts[l]);
        }
        EXPECT_NEAR(energy / m, 1.0, 1e-12) << class_name(c);
        double dmin = 1e300;
        for (unsigned a = 0; a < m; ++a)
            for (unsigned b = a + 1; b < m; ++b) dmin = std::min(dmin, std::abs(pts[a] - pts[b]));
        for (unsigned a = 0; a < m; ++a) {
            for (unsigned b = a + 1; b < m; ++b) {
                if (std::abs(pts[a] - pts[b]) < dmin * (1.0 + 1e-9)) {
                    EXPECT_EQ(std::popcount(a ^ b), 1) << class_name(c) << " " << a << "," << b;
                }
            }
        }
    }
}

TEST(MapSymbols, Errors) {
    EXPECT_THROW(map_symbols(ModClass::WBFM, Bits{0, 1}), Error);
    EXPECT_THROW(map_symbols(ModClass::CPFSK, Bits{0, 1}), Error);
    EXPECT_THROW(map_symbols(ModClass::QAM16, Bits{0, 1, 1}), Error);
}

TEST(Rrc, ShapeSymmetryEnergy) {
    for (double beta : {0.0, 0.2, 0.35, 0.5, 1.0}) {
        const auto h = rrc_taps(beta, 8, 11);
        ASSERT_EQ(h.size(), 89u);
        double e = 0.0;
        for (std::size_t k = 0; k < h.size(); ++k) {
            EXPECT_NEAR(h[k], h[h.size() - 1 - k], 1e-12);
            e += h[k] * h[k];
        }
        EXPECT_NEAR(e, 1.0, 1e-12);
    }
    EXPECT_THROW(rrc_taps(-0.1, 8, 11), Error);
    EXPECT_THROW(rrc_taps(1.1, 8, 11), Error);
}

TEST(Rrc, ZeroIsiAtSymbolSpacing) {
    for (double beta : {0.2, 0.35, 0.5}) {
        const auto h = rrc_taps(beta, 8, 11);
        const auto rc = correlate_taps(h, h);
        const std::size_t c = rc.size() / 2;
        double worst = 0.0;
        for (std::size_t k = 8; c + k < rc.size(); k += 8) worst = std::max(worst, std::abs(rc[c + k]) / rc[c]);
        EXPECT_LT(worst, 1e-3) << beta;
    }
}

TEST(Rrc, RefinementStaysCloseToClosedForm) {
    const auto proto = rrc_prototype(0.35, 8, 11);
    const auto h = rrc_taps(0.35, 8, 11);
    const double peak = *std::max_element(proto.begin(), proto.end());
    for (std::size_t k = 0; k < h.size(); ++k) EXPECT_LT(std::abs(h[k] - proto[k]), 0.05 * peak);
}

TEST(Rrc, BetaZeroIsNormalizedSinc) {
    const auto h = rrc_prototype(0.0, 8, 11);
    std::vector<double> s(h.size());
    double e = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        const double t = (static_cast<double>(i) - 44.0) / 8.0;
        s[i] = t == 0.0 ? 1.0 : std::sin(pi * t) / (pi * t);
        e += s[i] * s[i];
    }
    for (std::size_t i = 0; i < s.size(); ++i) EXPECT_NEAR(h[i], s[i] / std::sqrt(e), 1e-12);
}

TEST(Rrc, SingularityUsesLimit) {
    // beta = 0.25, sps = 8: |t| = 1 / (4 beta) lands on sample 44 +/- 8
    const auto h = rrc_prototype(0.25, 8, 11);
    const auto limit = [](double t) {
        const double b = 0.25;
        return (std::sin(pi * t * (1 - b)) + 4 * b * t * std::cos(pi * t * (1 + b))) /
               (pi * t * (1 - 16 * b * b * t * t));
    };
    const double scale = h[44] / (1.0 - 0.25 + 1.0 / pi);
    const double approx = 0.5 * (limit(1.0 - 1e-6) + limit(1.0 + 1e-6));
    EXPECT_NEAR(h[52] / scale, approx, 1e-6);
    EXPECT_NEAR(h[36], h[52], 1e-15);
}

TEST(PulseShape, ImpulseResponseAndZeros) {
    ModemConfig cfg;
    const auto taps = rrc_taps(cfg.rrc_beta, cfg.sps, cfg.rrc_span);
    const Signal out = pulse_shape(Signal{Cpx(1.0, 0.0)}, cfg);
    ASSERT_EQ(out.size(), cfg.sps + taps.size() - 1);
    for (std::size_t i = 0; i < taps.size(); ++i) EXPECT_DOUBLE_EQ(out[i].real(), taps[i]);
    for (const Cpx& z : pulse_shape(Signal(20, Cpx{}), cfg)) EXPECT_EQ(z, Cpx{});
    EXPECT_THROW(pulse_shape(Signal{}, cfg), Error);
}

TEST(PulseShape, MatchedFilterRecoversSymbols) {
    ModemConfig cfg;
    const auto taps = rrc_taps(cfg.rrc_beta, cfg.sps, cfg.rrc_span);
    const Signal sym = map_symbols(ModClass::QAM16, synth_bits(4 * 200, {3, 1}));
    const Signal tx = pulse_shape(sym, cfg);
    const std::size_t delay = taps.size() - 1;  // transmit + receive group delay
    for (std::size_t k = 0; k < sym.size(); ++k) {
        Cpx z{};
        const std::size_t at = k * cfg.sps + delay;
        for (std::size_t j = 0; j < taps.size(); ++j)
            if (at >= j && at - j < tx.size()) z += taps[j] * tx[at - j];
        EXPECT_LT(std::abs(z - sym[k]), 1e-3) << k;
    }
}

TEST(Fsk, ConstantEnvelope) {
    ModemConfig cfg;
    const Bits bits = synth_bits(500, {1, 1});
    for (ModClass c : {ModClass::GFSK_BFSK, ModClass::CPFSK})
        for (const Cpx& z : modulate_fsk(c, bits, cfg)) ASSERT_LT(std::abs(std::abs(z) - 1.0), 1e-9);
}

TEST(Fsk, BfskAlternatingBitsPeakAtDeviation) {
    ModemConfig cfg;
    Bits bits(256);
    for (std::size_t i = 0; i < bits.size(); ++i) bits[i] = i & 1u;
    const Signal x = modulate_fsk(ModClass::GFSK_BFSK, bits, cfg);
    const double dev = fsk_deviation(cfg);
    const double pos = peak_frequency(x, 0.001, 0.25, 0.0005);
    const double neg = peak_frequency(x, -0.25, -0.001, 0.0005);
    const double bin = 1.0 / static_cast<double>(x.size());
    EXPECT_NEAR(pos, dev, bin);
    EXPECT_NEAR(neg, -dev, bin);
}

TEST(Fsk, CpfskPhaseIsContinuousAndBounded) {
    ModemConfig cfg;
    const Signal x = modulate_fsk(ModClass::CPFSK, synth_bits(400, {2, 2}), cfg);
    const double bound = pi * cfg.fsk_mod_index / static_cast<double>(cfg.sps);
    for (std::size_t i = 1; i < x.size(); ++i) {
        const double d = std::arg(x[i] * std::conj(x[i - 1]));
        ASSERT_NEAR(std::abs(d), bound, 1e-9) << i;
    }
}

TEST(Fsk, BfskJumpsAtSymbolBoundaries) {
    ModemConfig cfg;
    const Signal x = modulate_fsk(ModClass::GFSK_BFSK, Bits{1, 0, 1, 0, 1, 0}, cfg);
    const double bound = pi * cfg.fsk_mod_index / static_cast<double>(cfg.sps);
    std::size_t jumps = 0;
    for (std::size_t i = 1; i < x.size(); ++i)
        if (std::abs(std::arg(x[i] * std::conj(x[i - 1]))) > bound + 1e-6) ++jumps;
    EXPECT_GE(jumps, 3u);
}

TEST(Audio, RangeMeanDeterminism) {
    const auto a = synth_audio(100000, {7, 7});
    EXPECT_LE(*std::max_element(a.begin(), a.end()), 1.0);
    EXPECT_GE(*std::min_element(a.begin(), a.end()), -1.0);
    const double mean = std::accumulate(a.begin(), a.end(), 0.0) / a.size();
    EXPECT_LT(std::abs(mean), 0.01);
    EXPECT_EQ(a, synth_audio(100000, {7, 7}));
    EXPECT_NE(a, synth_audio(100000, {7, 8}));
    const double silent = static_cast<double>(std::count(a.begin(), a.end(), 0.0)) / a.size();
    EXPECT_NEAR(silent, 0.1, 0.01);
}

TEST(Analog, WbfmConstantEnvelope) {
    ModemConfig cfg;
    const auto audio = synth_audio(5000, {1, 9});
    for (const Cpx& z : modulate_analog(ModClass::WBFM, audio, cfg)) ASSERT_LT(std::abs(std::abs(z) - 1.0), 1e-9);
}

TEST(Analog, AmDsbSilenceIsCarrier) {
    ModemConfig cfg;
    for (const Cpx& z : modulate_analog(ModClass::AM_DSB, std::vector<double>(300, 0.0), cfg))
        EXPECT_EQ(z, Cpx(1.0, 0.0));
}

TEST(Analog, SsbRejectsImage) {
    ModemConfig cfg;
    const double f0 = 0.05;
    std::vector<double> tone(8192);
    for (std::size_t t = 0; t < tone.size(); ++t) tone[t] = 0.8 * std::cos(2.0 * pi * f0 * t);
    const Signal x = modulate_analog(ModClass::AM_SSB, tone, cfg);
    const std::span<const Cpx> body(x.data() + 256, x.size() - 512);
    const double wanted = dft_mag(body, f0);
    const double image = dft_mag(body, -f0);
    EXPECT_GE(20.0 * std::log10(wanted / image), 30.0);
}

TEST(Analog, DigitalClassIsError) {
    EXPECT_THROW(modulate_analog(ModClass::QPSK, std::vector<double>(10, 0.0), ModemConfig{}), Error);
}

TEST(Generate, UnitPowerLengthDeterminism) {
    ModemConfig cfg;
    for (ModClass c : all_classes) {
        for (std::size_t n : {128u, 1024u, 3000u}) {
            const Signal x = generate_signal(c, n, cfg, {4, 4});
            ASSERT_EQ(x.size(), n);
            EXPECT_NEAR(mean_power(x), 1.0, 1e-9) << class_name(c);
            for (const Cpx& z : x) ASSERT_TRUE(is_finite(z));
        }
        EXPECT_EQ(generate_signal(c, 600, cfg, {8, 1}), generate_signal(c, 600, cfg, {8, 1}));
        EXPECT_NE(generate_signal(c, 600, cfg, {8, 1}), generate_signal(c, 600, cfg, {8, 2}));
    }
    EXPECT_THROW(generate_signal(ModClass::QPSK, 127, cfg, {1, 1}), Error);
}

TEST(Generate, QpskSymbolCount) {
    ModemConfig cfg;
    const GeneratedSignal g = generate_signal_detailed(ModClass::QPSK, 1024, cfg, {1, 3});
    ASSERT_EQ(g.samples.size(), 1024u);
    std::size_t peaks = 0;
    for (std::size_t p = g.first_peak; p < g.samples.size(); p += cfg.sps) ++peaks;
    EXPECT_EQ(peaks, 1024u / cfg.sps);
}

TEST(Generate, LoopbackZeroBitErrors) {
    ModemConfig cfg;
    for (ModClass c : all_classes) {
        if (!is_linear_digital(c)) continue;
        for (std::uint64_t s = 0; s < 5; ++s) {
            const GeneratedSignal g = generate_signal_detailed(c, 2048, cfg, {77, s});
            const Loopback r = matched_filter_loopback(c, g, cfg);
            EXPECT_GT(r.symbols_checked, 200u);
            EXPECT_EQ(r.bit_errors, 0u) << class_name(c);
            EXPECT_LT(r.max_symbol_error, 1e-3) << class_name(c);
        }
    }
}

TEST(Generate, ConstantEnvelopeClasses) {
    ModemConfig cfg;
    for (ModClass c : {ModClass::GFSK_BFSK, ModClass::CPFSK, ModClass::WBFM}) {
        const Signal x = generate_signal(c, 4096, cfg, {6, 1});
        double lo = 1e300, hi = 0.0;
        for (const Cpx& z : x) {
            lo = std::min(lo, std::abs(z));
            hi = std::max(hi, std::abs(z));
        }
        EXPECT_LT((hi - lo) / hi, 1e-6) << class_name(c);
    }
}

TEST(ModemConfig, Validation) {
    ModemConfig cfg;
    cfg.sps = 1;
    EXPECT_THROW(cfg.validate(), ConfigError);
    cfg = {};
    cfg.rrc_beta = 1.5;
    EXPECT_THROW(cfg.validate(), ConfigError);
    cfg = {};
    cfg.rrc_span = 3;
    EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(ModClass, NamesRoundTrip) {
    for (ModClass c : all_classes) EXPECT_EQ(parse_class(class_name(c)), c);
    EXPECT_FALSE(parse_class("OFDM").has_value());
    EXPECT_EQ(class_id(ModClass::AM_DSB), 10u);
}
