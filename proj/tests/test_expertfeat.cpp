// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "modrec/expertfeat.hpp"

using namespace modrec;
using std::numbers::pi;

namespace {

IqFrame frame_of(auto&& fn) {
    Signal s(IqFrame::length);
    for (std::size_t t = 0; t < s.size(); ++t) s[t] = fn(static_cast<double>(t));
    return IqFrame(s);
}

IqFrame rotate(const IqFrame& x, double theta) {
    Signal s(x.samples().begin(), x.samples().end());
    for (Cpx& z : s) z *= std::polar(1.0, theta);
    return IqFrame(s);
}

} // namespace

TEST(LagProduct, ConstantToneAndIdentity) {
    const Cpx c(0.6, -0.8);
    const IqFrame k = frame_of([&](double) { return c; });
    for (std::size_t lag : {1u, 8u, 127u}) {
        const Signal y = lag_product(k, lag);
        ASSERT_EQ(y.size(), 128 - lag);
        for (const Cpx& z : y) EXPECT_NEAR(std::abs(z - std::norm(c)), 0.0, 1e-15);
    }
    const double w = 0.37;
    const Signal y = lag_product(frame_of([&](double t) { return std::polar(1.0, w * t); }), 8);
    for (const Cpx& z : y) EXPECT_NEAR(std::abs(z - std::polar(1.0, -8 * w)), 0.0, 1e-12);
    const IqFrame g = frame_of([](double t) { return Cpx(std::sin(t), t / 100); });
    const Signal id = lag_product(g, 0);
    EXPECT_TRUE(std::equal(id.begin(), id.end(), g.samples().begin()));
    EXPECT_THROW(lag_product(g, 128), Error);
}

TEST(MomentStats, DegenerateConstant) {
    const Signal y(50, Cpx(1.0, 0.0));
    for (unsigned p = 1; p <= 2; ++p) {
        const auto mean = moment_stats(y, p, 1);
        EXPECT_DOUBLE_EQ(mean[0], 1.0);
        EXPECT_DOUBLE_EQ(mean[1], 1.0);
        EXPECT_DOUBLE_EQ(mean[2], 0.0);
        EXPECT_DOUBLE_EQ(mean[3], 0.0);
        for (double v : moment_stats(y, p, 2)) EXPECT_DOUBLE_EQ(v, 0.0);
    }
}

TEST(MomentStats, SquaringCollapsesBpsk) {
    Signal y(64);
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = i % 2 ? -1.0 : 1.0;
    EXPECT_DOUBLE_EQ(moment_stats(y, 2, 1)[0], 1.0);
    EXPECT_DOUBLE_EQ(moment_stats(y, 2, 2)[0], 0.0);
    EXPECT_DOUBLE_EQ(moment_stats(y, 1, 1)[0], 0.0);
    // Phase alternates 0 / pi: mean pi/2, variance pi^2/4.
    EXPECT_NEAR(moment_stats(y, 1, 1)[2], pi / 2, 1e-14);
    EXPECT_NEAR(moment_stats(y, 1, 2)[2], pi * pi / 4, 1e-14);
}

TEST(MomentStats, GaussianMeanVanishes) {
    const Signal y = gaussian_iq_noise(10000, 1.0, {4, 4});
    EXPECT_LT(moment_stats(y, 1, 1)[0], 0.05);
    // Circular Gaussian: E|y|^2 = 1, var |y|^2 = 1 (exponential), |E[(y-mu)^2]| ~ 0.
    EXPECT_NEAR(moment_stats(y, 2, 1)[1], 1.0, 0.05);
    EXPECT_NEAR(moment_stats(y, 2, 2)[1], 1.0, 0.1);
    EXPECT_LT(moment_stats(y, 1, 2)[0], 0.05);
    // Uniform phase on (-pi, pi]: mean |phase| = pi/2, var phase = pi^2/3.
    EXPECT_NEAR(moment_stats(y, 1, 1)[3], pi / 2, 0.05);
    EXPECT_NEAR(moment_stats(y, 1, 2)[2], pi * pi / 3, 0.1);
}

TEST(MomentStats, RejectsEmptyAndBadOrders) {
    EXPECT_THROW(moment_stats(Signal{}, 1, 1), Error);
    EXPECT_THROW(moment_stats(Signal(3), 3, 1), Error);
}

TEST(ExtractFeatures, ConstantFrameByHand) {
    const IqFrame k = frame_of([](double) { return std::polar(1.0, pi / 4); });
    const FeatureVector f = extract_features(k);
    // lag 0 keeps the pi/4 phase; lag 8 products are exactly 1.
    const std::array<double, 4> phase0 = {pi / 4, pi / 4, pi / 4, pi / 4};
    for (unsigned p = 1; p <= 2; ++p) {
        const double ph = std::pow(phase0[0], p);
        EXPECT_NEAR(f[feature_index(0, 0, p, 1)], 1.0, 1e-14);
        EXPECT_NEAR(f[feature_index(0, 1, p, 1)], 1.0, 1e-14);
        EXPECT_NEAR(f[feature_index(0, 2, p, 1)], ph, 1e-14);
        EXPECT_NEAR(f[feature_index(0, 3, p, 1)], ph, 1e-14);
        for (std::size_t t = 0; t < 4; ++t) {
            EXPECT_NEAR(f[feature_index(0, t, p, 2)], 0.0, 1e-14);
            EXPECT_NEAR(f[feature_index(1, t, p, 2)], 0.0, 1e-14);
        }
        EXPECT_NEAR(f[feature_index(1, 0, p, 1)], 1.0, 1e-14);
        EXPECT_NEAR(f[feature_index(1, 1, p, 1)], 1.0, 1e-14);
        EXPECT_NEAR(f[feature_index(1, 2, p, 1)], 0.0, 1e-14);
        EXPECT_NEAR(f[feature_index(1, 3, p, 1)], 0.0, 1e-14);
    }
}

TEST(ExtractFeatures, GoldenVector) {
    // Values from an independent NumPy evaluation of the same definitions.
    const IqFrame x = frame_of([](double t) {
        return Cpx(std::cos(0.3 * t), 0.5 * std::sin(0.011 * t * t)) + 0.2 * std::polar(1.0, 0.7 * t);
    });
    const FeatureVector golden = {
        3.374044753491793e-02, 4.029613194083490e-01, 4.025438958693128e-01, 1.452441818116629e-01,
        7.618146905926264e-01, 8.721193484896794e-02, 6.675735576517070e-01, 2.061586934663577e-01,
        1.991236669516082e-01, 3.510845473072725e+00, 3.550495707812980e+00, 1.228315068258438e+01,
        1.520347823911322e+00, 1.239038202141087e+00, 3.550495707812980e+00, 1.228315068258438e+01,
        3.533534367963423e-01, 2.354438270523328e-02, 1.379309929280227e-01, 3.600327728244634e-02,
        5.799994585907239e-01, 9.297558410581645e-02, 4.293749560713495e-01, 1.581592534402932e-01,
        2.976632567807515e-02, 5.285785447947078e+00, 5.286671482091451e+00, 1.014385851357559e+01,
        2.120972942961193e+00, 7.881452573179859e-01, 5.286671482091451e+00, 1.014385851357559e+01};
    const FeatureVector f = extract_features(x);
    for (std::size_t i = 0; i < num_features; ++i) EXPECT_NEAR(f[i], golden[i], 1e-12 * (1 + golden[i])) << i;
}

TEST(ExtractFeatures, BpskSquaringOracle) {
    // A 16-symbol frame has a random DC term, so compare averages over frames.
    double pow1 = 0.0, pow2 = 0.0;
    for (std::uint64_t k = 0; k < 50; ++k) {
        const FeatureVector f = extract_features(IqFrame(generate_signal(ModClass::BPSK, 128, ModemConfig{}, {3, k})));
        pow1 += f[feature_index(0, 0, 1, 1)] / 50;
        pow2 += f[feature_index(0, 0, 2, 1)] / 50;
        EXPECT_NEAR(f[feature_index(0, 0, 2, 1)], 1.0, 1e-9);  // real signal: mean of x^2 is its power
    }
    EXPECT_GT(pow2, 4.0 * pow1);
}

TEST(ExtractFeatures, RotationInvariance) {
    const IqFrame x(generate_signal(ModClass::QAM16, 128, ModemConfig{}, {8, 1}));
    const FeatureVector a = extract_features(x);
    for (double theta : {0.3, 1.7, -2.9}) {
        const FeatureVector b = extract_features(rotate(x, theta));
        for (unsigned p = 1; p <= 2; ++p)
            for (unsigned m = 1; m <= 2; ++m) {
                // Amplitude features at both lags and the complex mean magnitude.
                EXPECT_NEAR(a[feature_index(0, 1, p, m)], b[feature_index(0, 1, p, m)], 1e-12);
                EXPECT_NEAR(a[feature_index(0, 0, p, 1)], b[feature_index(0, 0, p, 1)], 1e-12);
                // The conjugate lag product cancels the rotation entirely.
                for (std::size_t t = 0; t < 4; ++t)
                    EXPECT_NEAR(a[feature_index(1, t, p, m)], b[feature_index(1, t, p, m)], 1e-9);
            }
    }
}

TEST(ExtractFeatures, ZeroFrameIsFinite) {
    for (double v : extract_features(IqFrame{})) EXPECT_TRUE(std::isfinite(v));
    for (double v : extract_features(IqFrame{})) EXPECT_EQ(v, 0.0);
}

TEST(ExtractFeatures, NamesFollowOrdering) {
    const auto names = feature_names();
    ASSERT_EQ(names.size(), 32u);
    EXPECT_EQ(names[0], "lag0_complex_pow1_mean");
    EXPECT_EQ(names[1], "lag0_complex_pow1_var");
    EXPECT_EQ(names[2], "lag0_complex_pow2_mean");
    EXPECT_EQ(names[4], "lag0_amplitude_pow1_mean");
    EXPECT_EQ(names[16], "lag8_complex_pow1_mean");
    EXPECT_EQ(names[31], "lag8_absphase_pow2_var");
}

TEST(Featurize, ShapeLabelsAndThreads) {
    GenerationConfig cfg;
    cfg.classes = {ModClass::BPSK, ModClass::WBFM};
    cfg.snrs = {0, 10};
    cfg.signals_per_cell = 3;
    cfg.windows_per_signal = 4;
    const Dataset ds = build_dataset(cfg);
    const FeatureSet one = featurize_dataset(ds);
    const FeatureSet many = featurize_dataset(ds, 4);
    ASSERT_EQ(one.x.rows(), 48);
    ASSERT_EQ(one.x.cols(), 32);
    EXPECT_EQ(one.x, many.x);
    for (std::size_t i = 0; i < ds.size(); ++i) {
        EXPECT_EQ(one.labels[i], static_cast<int>(class_id(ds.frames[i].cls)));
        EXPECT_EQ(one.snrs[i], ds.frames[i].snr);
        const FeatureVector f = extract_features(ds.frames[i].frame);
        for (std::size_t j = 0; j < 32; ++j) EXPECT_EQ(one.x(static_cast<Eigen::Index>(i), j), f[j]);
    }
}

TEST(Standardizer, TrainColumnsAreZScored) {
    FeatureMatrix x(200, 3);
    Rng rng({2, 2});
    for (Eigen::Index i = 0; i < x.rows(); ++i) x.row(i) << 5 + 3 * rng.gaussian(), -2 + 0.1 * rng.gaussian(), 7.0;
    const Standardizer s = Standardizer::fit(x);
    const FeatureMatrix z = s.apply(x);
    for (Eigen::Index j = 0; j < 2; ++j) {
        const double mean = z.col(j).mean();
        const double var = (z.col(j).array() - mean).square().mean();
        EXPECT_LT(std::abs(mean), 1e-9);
        EXPECT_NEAR(std::sqrt(var), 1.0, 1e-9);
    }
    EXPECT_TRUE(z.col(2).isZero());
}

TEST(Standardizer, TestUsesTrainStatistics) {
    FeatureMatrix train(4, 1), test(2, 1);
    train << 1, 2, 3, 4;
    test << 10, 20;
    const Standardizer s = Standardizer::fit(train);
    const FeatureMatrix z = s.apply(test);
    const double sd = std::sqrt(1.25);
    EXPECT_NEAR(z(0, 0), (10 - 2.5) / sd, 1e-12);
    EXPECT_NEAR(z(1, 0), (20 - 2.5) / sd, 1e-12);
    EXPECT_THROW(s.apply(FeatureMatrix(2, 2)), Error);
}

TEST(Featurize, CsvHasHeaderAndRows) {
    FeatureSet fs;
    fs.x = FeatureMatrix::Zero(2, 32);
    fs.labels = {0, 10};
    fs.snrs = {-4, 6};
    const std::string csv = features_csv(fs);
    EXPECT_EQ(csv.substr(0, 32), "class,snr,lag0_complex_pow1_mean");
    EXPECT_NE(csv.find("\nAM-DSB,6,0,"), std::string::npos);
    EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 3);
}
