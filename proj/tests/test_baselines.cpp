// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "modrec/baselines.hpp"

using namespace modrec;

namespace {

struct Blobs {
    FeatureMatrix x;
    Labels y;
};

/// Well-separated isotropic Gaussian blobs in `dim` dimensions.
/// Centers come from `seed`; the scatter around them from `noise_seed`.
Blobs blobs(std::size_t per_class, std::size_t classes, Eigen::Index dim, double spread, std::uint64_t seed,
            std::uint64_t noise_seed = 0) {
    Rng center_rng({seed, 5});
    FeatureMatrix centers(static_cast<Eigen::Index>(classes), dim);
    for (Eigen::Index i = 0; i < centers.size(); ++i) centers.data()[i] = center_rng.uniform(-4.0, 4.0);
    Rng rng({seed, 6 + noise_seed});
    Blobs b;
    b.x.resize(static_cast<Eigen::Index>(per_class * classes), dim);
    for (std::size_t i = 0; i < per_class * classes; ++i) {
        const auto c = static_cast<int>(i % classes);
        b.y.push_back(c);
        for (Eigen::Index j = 0; j < dim; ++j)
            b.x(static_cast<Eigen::Index>(i), j) = centers(c, j) + spread * rng.gaussian();
    }
    return b;
}

double accuracy(const Labels& a, const Labels& b) {
    std::size_t hit = 0;
    for (std::size_t i = 0; i < a.size(); ++i) hit += a[i] == b[i];
    return static_cast<double>(hit) / static_cast<double>(a.size());
}

std::vector<double> row_of(const FeatureMatrix& x, Eigen::Index i) {
    return {x.row(i).data(), x.row(i).data() + x.cols()};
}

} // namespace

TEST(Knn1, ExactMatchAndTieRule) {
    FeatureMatrix x(3, 2);
    x << 0, 0, 2, 0, -2, 0;
    const Knn1 m = Knn1::fit(x, {4, 7, 9});
    EXPECT_EQ(m.predict(std::vector<double>{2, 0}), 7);
    EXPECT_EQ(m.predict(std::vector<double>{0, 0}), 4);
    FeatureMatrix t(2, 1);
    t << 1, -1;
    EXPECT_EQ(Knn1::fit(t, {5, 3}).predict(std::vector<double>{0}), 5);
    EXPECT_EQ(Knn1::fit(t, {3, 5}).predict(std::vector<double>{0}), 3);
    EXPECT_THROW(m.predict(std::vector<double>{1, 2, 3}), Error);
}

TEST(Knn1, MatchesExhaustiveScan) {
    const Blobs train = blobs(20, 10, 5, 3.0, 1);
    const Blobs query = blobs(20, 10, 5, 3.0, 1, 1);
    const Knn1 m = Knn1::fit(train.x, train.y);
    for (Eigen::Index q = 0; q < query.x.rows(); ++q) {
        Eigen::Index arg = 0;
        (train.x.rowwise() - query.x.row(q)).rowwise().squaredNorm().minCoeff(&arg);
        EXPECT_EQ(m.predict(row_of(query.x, q)), train.y[static_cast<std::size_t>(arg)]);
    }
    EXPECT_EQ(accuracy(TrainedClassifier(m).predict(train.x), train.y), 1.0);
}

TEST(GaussianNb, SymmetricClasses) {
    FeatureMatrix x(4, 1);
    x << -1.5, -0.5, 0.5, 1.5;
    const GaussianNb m = GaussianNb::fit(x, {2, 2, 6, 6});
    EXPECT_EQ(m.predict(std::vector<double>{0.9}), 6);
    EXPECT_EQ(m.predict(std::vector<double>{-0.9}), 2);
    EXPECT_EQ(m.predict(std::vector<double>{0.0}), 2);  // exact tie -> lowest id
}

TEST(GaussianNb, MatchesDensityFormula) {
    const Blobs train = blobs(30, 4, 3, 2.0, 3);
    const GaussianNb m = GaussianNb::fit(train.x, train.y);
    Rng rng({9, 9});
    for (int q = 0; q < 100; ++q) {
        const std::vector<double> v = {rng.uniform(-6, 6), rng.uniform(-6, 6), rng.uniform(-6, 6)};
        int best = -1;
        double best_p = -1.0;
        for (int c = 0; c < 4; ++c) {
            double p = 0.25;
            for (int j = 0; j < 3; ++j) {
                double mu = 0.0, var = 0.0;
                for (int i = 0; i < 120; ++i)
                    if (train.y[i] == c) mu += train.x(i, j) / 30;
                for (int i = 0; i < 120; ++i)
                    if (train.y[i] == c) var += (train.x(i, j) - mu) * (train.x(i, j) - mu) / 30;
                p *= std::exp(-(v[j] - mu) * (v[j] - mu) / (2 * var)) / std::sqrt(2 * std::numbers::pi * var);
            }
            if (p > best_p) {
                best_p = p;
                best = c;
            }
        }
        EXPECT_EQ(m.predict(v), best);
    }
}

TEST(GaussianNb, VarianceFloorAndSmallClass) {
    FeatureMatrix x(4, 1);
    x << 1, 1, 3, 3;
    const GaussianNb m = GaussianNb::fit(x, {0, 0, 1, 1});
    EXPECT_EQ(m.var(0, 0), 1e-9);
    EXPECT_EQ(m.predict(std::vector<double>{1.1}), 0);
    FeatureMatrix y(3, 1);
    y << 1, 2, 3;
    EXPECT_THROW(GaussianNb::fit(y, {0, 0, 1}), Error);
}

TEST(DecisionTree, PureDataIsOneLeaf) {
    const Blobs b = blobs(10, 1, 4, 1.0, 4);
    const DecisionTree t = DecisionTree::fit(b.x, b.y);
    EXPECT_EQ(t.nodes.size(), 1u);
    EXPECT_EQ(accuracy(TrainedClassifier(t).predict(b.x), b.y), 1.0);
}

TEST(DecisionTree, XorQuadrantsAtDepthTwo) {
    // Points sit on the four quadrant corners with unequal multiplicities, so
    // the only candidate thresholds are x = 0 and y = 0 and neither has zero gain.
    FeatureMatrix x(0, 2);
    Labels y;
    const int sizes[4] = {9, 13, 11, 7};
    for (int q = 0; q < 4; ++q)
        for (int i = 0; i < sizes[q]; ++i) {
            x.conservativeResize(x.rows() + 1, 2);
            x.row(x.rows() - 1) << (q & 1 ? 1.0 : -1.0), (q & 2 ? 1.0 : -1.0);
            y.push_back((q & 1) ^ ((q & 2) >> 1));
        }
    std::vector<std::size_t> rows(y.size());
    std::iota(rows.begin(), rows.end(), 0);
    // Enumerated by hand: x=0 leaves {9 of 0, 11 of 1} | {13 of 1, 7 of 0},
    // y=0 leaves {9 of 0, 13 of 1} | {11 of 1, 7 of 0}; weighted Gini favours x.
    const double cost_x = 20 - (81.0 + 121.0) / 20 + 20 - (169.0 + 49.0) / 20;
    const double cost_y = 22 - (81.0 + 169.0) / 22 + 18 - (121.0 + 49.0) / 18;
    const SplitChoice root = best_split(x, y, rows, 1);
    EXPECT_EQ(root.feature, cost_x <= cost_y ? 0 : 1);
    EXPECT_EQ(root.threshold, 0.0);
    const DecisionTree t = DecisionTree::fit(x, y, {2, 1});
    EXPECT_LE(t.depth(), 2u);
    EXPECT_EQ(accuracy(TrainedClassifier(t).predict(x), y), 1.0);
}

TEST(DecisionTree, RootSplitMatchesBruteForce) {
    for (std::uint64_t trial = 0; trial < 20; ++trial) {
        const Blobs b = blobs(5, 3, 3, 3.0, 100 + trial);
        const std::size_t min_leaf = 1 + trial % 3;
        std::vector<std::size_t> rows(b.y.size());
        std::iota(rows.begin(), rows.end(), 0);
        const SplitChoice s = best_split(b.x, b.y, rows, min_leaf);

        double best = std::numeric_limits<double>::infinity();
        int bf = -1;
        double bt = 0.0;
        for (int f = 0; f < 3; ++f) {
            std::vector<double> vals;
            for (std::size_t i = 0; i < rows.size(); ++i) vals.push_back(b.x(static_cast<Eigen::Index>(i), f));
            std::ranges::sort(vals);
            for (std::size_t k = 0; k + 1 < vals.size(); ++k) {
                if (vals[k] == vals[k + 1]) continue;
                const double thr = 0.5 * (vals[k] + vals[k + 1]);
                double cost = 0.0;
                for (int side = 0; side < 2; ++side) {
                    std::array<double, 11> cnt{};
                    double n = 0;
                    for (std::size_t i = 0; i < rows.size(); ++i)
                        if ((b.x(static_cast<Eigen::Index>(i), f) <= thr) == (side == 0)) {
                            cnt[static_cast<std::size_t>(b.y[i])] += 1;
                            n += 1;
                        }
                    if (n < static_cast<double>(min_leaf)) cost = std::numeric_limits<double>::infinity();
                    double gini = 1.0;
                    for (double c : cnt) gini -= (c / n) * (c / n);
                    cost += n * gini;
                }
                if (cost < best - 1e-9) {
                    best = cost;
                    bf = f;
                    bt = thr;
                }
            }
        }
        EXPECT_EQ(s.feature, bf) << "trial " << trial;
        EXPECT_DOUBLE_EQ(s.threshold, bt) << "trial " << trial;
        EXPECT_NEAR(s.cost, best, 1e-9);
    }
}

TEST(DecisionTree, RespectsDepthAndLeafSize) {
    const Blobs b = blobs(40, 5, 4, 4.0, 6);
    for (std::size_t depth : {1u, 3u, 6u})
        for (std::size_t leaf : {1u, 5u, 12u}) {
            const DecisionTree t = DecisionTree::fit(b.x, b.y, {depth, leaf});
            for (const auto& n : t.nodes) {
                EXPECT_LE(n.depth, depth);
                EXPECT_GE(n.count, leaf);
                if (n.feature >= 0) {
                    EXPECT_EQ(t.nodes[static_cast<std::size_t>(n.left)].count +
                                  t.nodes[static_cast<std::size_t>(n.right)].count,
                              n.count);
                }
            }
        }
}

TEST(Svm, SmoInvariants) {
    const Blobs b = blobs(40, 2, 4, 2.5, 8);
    const FeatureMatrix k = rbf_kernel(b.x, b.x, 0.25);
    std::vector<int> y(b.y.size());
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = b.y[i] == 0 ? 1 : -1;
    for (double c : {0.1, 1.0, 10.0}) {
        const BinarySvm s = smo_solve(k, y, {c, 0.25, 1e-3, 100000});
        EXPECT_TRUE(s.converged);
        double balance = 0.0;
        for (std::size_t i = 0; i < y.size(); ++i) {
            EXPECT_GE(s.alpha[i], 0.0);
            EXPECT_LE(s.alpha[i], c);
            balance += s.alpha[i] * y[i];
        }
        EXPECT_NEAR(balance, 0.0, 1e-6);
    }
}

TEST(Svm, KernelMatchesDefinition) {
    const Blobs b = blobs(4, 2, 3, 1.0, 3);
    const FeatureMatrix k = rbf_kernel(b.x, b.x, 0.7);
    for (Eigen::Index i = 0; i < 8; ++i)
        for (Eigen::Index j = 0; j < 8; ++j)
            EXPECT_NEAR(k(i, j), std::exp(-0.7 * (b.x.row(i) - b.x.row(j)).squaredNorm()), 1e-12);
}

TEST(Svm, SeparableBlobsFitPerfectly) {
    const Blobs b = blobs(50, 2, 6, 0.5, 10);
    const RbfSvm m = RbfSvm::fit(b.x, b.y, {1.0, 1.0 / 6.0});
    EXPECT_TRUE(m.warnings.empty());
    EXPECT_EQ(accuracy(TrainedClassifier(m).predict(b.x), b.y), 1.0);
    EXPECT_LT(m.support.rows(), 100);
}

TEST(Svm, IterationCapRecordsWarning) {
    const Blobs b = blobs(50, 3, 4, 3.0, 11);
    SvmParams p;
    p.max_iter = 3;
    const RbfSvm m = RbfSvm::fit(b.x, b.y, p);
    EXPECT_EQ(m.warnings.size(), 3u);
    EXPECT_NO_THROW(TrainedClassifier(m).predict(b.x));
}

TEST(Svm, NeedsTwoClasses) {
    const Blobs b = blobs(10, 1, 2, 1.0, 1);
    EXPECT_THROW(RbfSvm::fit(b.x, b.y), Error);
}

TEST(Baselines, AllReachSanityFloorOnBlobs) {
    const Blobs train = blobs(100, 3, 32, 1.5, 20, 0);
    const Blobs test = blobs(100, 3, 32, 1.5, 20, 1);
    const Standardizer s = Standardizer::fit(train.x);
    for (auto kind : {BaselineKind::knn1, BaselineKind::gaussian_nb, BaselineKind::decision_tree, BaselineKind::rbf_svm}) {
        const auto clf = TrainedClassifier::fit(kind, train.x, train.y, {}, s);
        EXPECT_GE(accuracy(clf.predict(test.x), test.y), 0.95) << baseline_name(kind);
    }
}

TEST(Baselines, SerializationRoundTrip) {
    const Blobs b = blobs(30, 4, 5, 2.0, 30);
    const Standardizer s = Standardizer::fit(b.x);
    for (auto kind : {BaselineKind::knn1, BaselineKind::gaussian_nb, BaselineKind::decision_tree, BaselineKind::rbf_svm}) {
        const auto clf = TrainedClassifier::fit(kind, b.x, b.y, {}, s);
        const auto bytes = clf.serialize();
        EXPECT_EQ(model_kind(bytes), baseline_name(kind));
        const auto back = TrainedClassifier::deserialize(bytes);
        EXPECT_EQ(back.kind(), kind);
        EXPECT_EQ(back.predict(b.x), clf.predict(b.x));
        EXPECT_EQ(back.serialize(), bytes);
        auto cut = bytes;
        cut.resize(bytes.size() - 3);
        EXPECT_THROW(TrainedClassifier::deserialize(cut), ParseError);
        auto longer = bytes;
        longer.push_back(0);
        EXPECT_THROW(TrainedClassifier::deserialize(longer), ParseError);
    }
    EXPECT_THROW(TrainedClassifier::deserialize(std::vector<std::uint8_t>{'R', 'M', 'D', '1'}), ParseError);
}

TEST(Baselines, DeterministicFits) {
    const Blobs b = blobs(30, 5, 6, 2.5, 31);
    for (auto kind : {BaselineKind::decision_tree, BaselineKind::rbf_svm}) {
        EXPECT_EQ(TrainedClassifier::fit(kind, b.x, b.y).serialize(), TrainedClassifier::fit(kind, b.x, b.y).serialize());
    }
}
