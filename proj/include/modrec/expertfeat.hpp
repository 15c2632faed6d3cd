// SPDX-License-Identifier: Apache-2.0
#pragma once

// Cyclic-moment expert features. A frame yields 2 lags x 4 transforms x
// 2 powers x 2 moments = 32 reals, stored lag-major:
//
//   index = ((lag * 4 + transform) * 2 + (power - 1)) * 2 + (moment - 1)
//
// with lags {0, 8} and transforms {complex, amplitude, phase, abs-phase}.

#include <Eigen/Core>

#include <array>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "modrec/dataset.hpp"
#include "modrec/error.hpp"
#include "modrec/iqcore.hpp"

namespace modrec {

inline constexpr std::size_t num_features = 32;
inline constexpr std::array<std::size_t, 2> feature_lags = {0, 8};
inline constexpr std::array<std::string_view, 4> feature_transforms = {"complex", "amplitude", "phase", "absphase"};

using FeatureVector = std::array<double, num_features>;
using FeatureMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

constexpr std::size_t feature_index(std::size_t lag_idx, std::size_t transform, unsigned power, unsigned moment) {
    return ((lag_idx * 4 + transform) * 2 + (power - 1)) * 2 + (moment - 1);
}

inline std::vector<std::string> feature_names() {
    std::vector<std::string> out(num_features);
    for (std::size_t l = 0; l < feature_lags.size(); ++l)
        for (std::size_t t = 0; t < 4; ++t)
            for (unsigned p = 1; p <= 2; ++p)
                for (unsigned m = 1; m <= 2; ++m)
                    out[feature_index(l, t, p, m)] = "lag" + std::to_string(feature_lags[l]) + "_" +
                                                     std::string(feature_transforms[t]) + "_pow" + std::to_string(p) +
                                                     (m == 1 ? "_mean" : "_var");
    return out;
}

/// lag 0: x itself; lag l > 0: x[t] * conj(x[t + l]).
inline Signal lag_product(const IqFrame& x, std::size_t lag) {
    if (lag >= IqFrame::length) throw Error("lag must be < 128");
    if (lag == 0) return {x.samples().begin(), x.samples().end()};
    Signal y(IqFrame::length - lag);
    for (std::size_t t = 0; t < y.size(); ++t) y[t] = x[t] * std::conj(x[t + lag]);
    return y;
}

/// Principal argument with arg(0) = 0.
inline double safe_arg(Cpx z) { return z == Cpx{} ? 0.0 : std::arg(z); }

/// Statistics of the four transforms of y^n; moment 1 is the mean, moment 2
/// the central second moment. Complex statistics are reduced by magnitude.
inline std::array<double, 4> moment_stats(std::span<const Cpx> y, unsigned power, unsigned moment) {
    if (y.empty()) throw Error("empty sequence");
    if (power < 1 || power > 2 || moment < 1 || moment > 2) throw Error("power and moment must be 1 or 2");
    const auto n = static_cast<double>(y.size());
    const int k = static_cast<int>(power);

    Cpx c_mean{};
    std::array<double, 3> r_mean{};
    for (const Cpx& z : y) {
        const double ph = safe_arg(z);
        c_mean += power == 1 ? z : z * z;
        r_mean[0] += std::pow(std::abs(z), k);
        r_mean[1] += std::pow(ph, k);
        r_mean[2] += std::pow(std::abs(ph), k);
    }
    c_mean /= n;
    for (double& v : r_mean) v /= n;
    if (moment == 1) return {std::abs(c_mean), r_mean[0], r_mean[1], r_mean[2]};

    Cpx c_var{};
    std::array<double, 3> r_var{};
    for (const Cpx& z : y) {
        const double ph = safe_arg(z);
        const Cpx d = (power == 1 ? z : z * z) - c_mean;
        c_var += d * d;
        const std::array<double, 3> v = {std::pow(std::abs(z), k), std::pow(ph, k), std::pow(std::abs(ph), k)};
        for (int i = 0; i < 3; ++i) r_var[i] += (v[i] - r_mean[i]) * (v[i] - r_mean[i]);
    }
    return {std::abs(c_var / n), r_var[0] / n, r_var[1] / n, r_var[2] / n};
}

inline FeatureVector extract_features(const IqFrame& x) {
    FeatureVector f{};
    for (std::size_t l = 0; l < feature_lags.size(); ++l) {
        const Signal y = lag_product(x, feature_lags[l]);
        for (unsigned p = 1; p <= 2; ++p)
            for (unsigned m = 1; m <= 2; ++m) {
                const auto s = moment_stats(y, p, m);
                for (std::size_t t = 0; t < 4; ++t) f[feature_index(l, t, p, m)] = s[t];
            }
    }
    return f;
}

struct FeatureSet {
    FeatureMatrix x;
    std::vector<int> labels;
    std::vector<int> snrs;

    std::size_t rows() const noexcept { return static_cast<std::size_t>(x.rows()); }
};

inline FeatureSet featurize_dataset(const Dataset& ds, unsigned threads = 1) {
    FeatureSet fs;
    const std::size_t n = ds.size();
    fs.x.resize(static_cast<Eigen::Index>(n), num_features);
    fs.labels.resize(n);
    fs.snrs.resize(n);
    auto work = [&](std::size_t lo, std::size_t hi) {
        for (std::size_t i = lo; i < hi; ++i) {
            const FeatureVector v = extract_features(ds.frames[i].frame);
            for (std::size_t j = 0; j < num_features; ++j) fs.x(static_cast<Eigen::Index>(i), j) = v[j];
            fs.labels[i] = static_cast<int>(class_id(ds.frames[i].cls));
            fs.snrs[i] = ds.frames[i].snr;
        }
    };
    const std::size_t t = std::max<std::size_t>(1, std::min<std::size_t>(threads, n / 64 + 1));
    std::vector<std::jthread> pool;
    for (std::size_t k = 1; k < t; ++k) pool.emplace_back(work, n * k / t, n * (k + 1) / t);
    work(0, n / t);
    pool.clear();
    return fs;
}

/// Per-column z-scoring with statistics from the training rows only.
/// Constant columns keep scale 1 so they map to zero.
struct Standardizer {
    Eigen::RowVectorXd mean;
    Eigen::RowVectorXd scale;

    static Standardizer fit(const FeatureMatrix& x) {
        if (x.rows() == 0) throw Error("cannot fit standardizer on empty matrix");
        Standardizer s;
        s.mean = x.colwise().mean();
        const FeatureMatrix centered = x.rowwise() - s.mean;
        s.scale = (centered.array().square().colwise().sum() / static_cast<double>(x.rows())).sqrt();
        for (Eigen::Index j = 0; j < s.scale.size(); ++j)
            if (!(s.scale[j] > 1e-300)) s.scale[j] = 1.0;
        return s;
    }

    bool fitted() const noexcept { return mean.size() > 0; }

    FeatureMatrix apply(const FeatureMatrix& x) const {
        if (x.cols() != mean.size()) throw Error("standardizer column count mismatch");
        return ((x.rowwise() - mean).array().rowwise() / scale.array()).matrix();
    }
};

inline std::string features_csv(const FeatureSet& fs) {
    std::ostringstream out;
    out << std::setprecision(17) << "class,snr";
    for (const auto& name : feature_names()) out << ',' << name;
    out << '\n';
    for (std::size_t i = 0; i < fs.rows(); ++i) {
        out << class_names.at(static_cast<std::size_t>(fs.labels[i])) << ',' << fs.snrs[i];
        for (Eigen::Index j = 0; j < fs.x.cols(); ++j) out << ',' << fs.x(static_cast<Eigen::Index>(i), j);
        out << '\n';
    }
    return out.str();
}

} // namespace modrec
