// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "modrec/binary_io.hpp"
#include "modrec/error.hpp"
#include "modrec/expertfeat.hpp"

namespace modrec {

using Labels = std::vector<int>;

namespace detail {

inline void check_training_set(const FeatureMatrix& x, const Labels& y) {
    if (x.rows() == 0) throw Error("training set is empty");
    if (static_cast<std::size_t>(x.rows()) != y.size()) throw Error("feature rows and labels differ in length");
    for (int c : y)
        if (c < 0 || c >= static_cast<int>(num_classes)) throw Error("label out of range");
}

inline void check_dim(std::span<const double> q, Eigen::Index dim) {
    if (static_cast<Eigen::Index>(q.size()) != dim)
        throw Error("feature dimension " + std::to_string(q.size()) + " does not match model (" +
                    std::to_string(dim) + ")");
}

inline std::span<const double> row(const FeatureMatrix& x, Eigen::Index i) {
    return {x.data() + i * x.cols(), static_cast<std::size_t>(x.cols())};
}

inline void put_matrix(ByteWriter& w, const FeatureMatrix& m) {
    w.put<std::uint64_t>(static_cast<std::uint64_t>(m.rows()));
    w.put<std::uint64_t>(static_cast<std::uint64_t>(m.cols()));
    for (Eigen::Index i = 0; i < m.size(); ++i) w.put<double>(m.data()[i]);
}

inline FeatureMatrix get_matrix(ByteReader& r) {
    const std::size_t at = r.offset();
    const auto rows = r.get<std::uint64_t>();
    const auto cols = r.get<std::uint64_t>();
    if (cols > 4096 || (cols > 0 && rows > r.remaining() / 8 / cols))
        throw ParseError("implausible matrix shape", at);
    FeatureMatrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = r.get<double>();
    return m;
}

inline void put_labels(ByteWriter& w, const Labels& y) {
    w.put<std::uint64_t>(y.size());
    for (int c : y) w.put<std::int32_t>(c);
}

inline Labels get_labels(ByteReader& r) {
    const std::size_t at = r.offset();
    const auto n = r.get<std::uint64_t>();
    if (n > r.remaining() / 4) throw ParseError("implausible label count", at);
    Labels y(static_cast<std::size_t>(n));
    for (int& c : y) {
        const std::size_t here = r.offset();
        c = r.get<std::int32_t>();
        if (c < 0 || c >= static_cast<int>(num_classes)) throw ParseError("label out of range", here);
    }
    return y;
}

} // namespace detail

// ---------------------------------------------------------------------------
// 1-nearest neighbour

struct Knn1 {
    FeatureMatrix x;
    Labels y;

    static Knn1 fit(const FeatureMatrix& x, const Labels& y) {
        detail::check_training_set(x, y);
        return {x, y};
    }

    Eigen::Index dim() const { return x.cols(); }

    /// Euclidean nearest row; the lowest row index wins ties.
    int predict(std::span<const double> q) const {
        detail::check_dim(q, dim());
        double best = std::numeric_limits<double>::infinity();
        Eigen::Index arg = 0;
        for (Eigen::Index i = 0; i < x.rows(); ++i) {
            const double* r = x.data() + i * x.cols();
            double d = 0.0;
            for (Eigen::Index j = 0; j < x.cols(); ++j) {
                const double e = r[j] - q[static_cast<std::size_t>(j)];
                d += e * e;
                if (d >= best) break;
            }
            if (d < best) {
                best = d;
                arg = i;
            }
        }
        return y[static_cast<std::size_t>(arg)];
    }

    void write(ByteWriter& w) const {
        detail::put_matrix(w, x);
        detail::put_labels(w, y);
    }
    static Knn1 read(ByteReader& r) {
        Knn1 m{detail::get_matrix(r), detail::get_labels(r)};
        if (static_cast<std::size_t>(m.x.rows()) != m.y.size() || m.y.empty())
            throw ParseError("knn1 body is inconsistent", r.offset());
        return m;
    }
};

// ---------------------------------------------------------------------------
// Gaussian naive Bayes

struct GaussianNb {
    static constexpr double var_floor = 1e-9;

    FeatureMatrix mean;      ///< classes x dim
    FeatureMatrix var;       ///< classes x dim, floored
    std::vector<double> log_prior;  ///< -inf for classes absent from training

    static GaussianNb fit(const FeatureMatrix& x, const Labels& y) {
        detail::check_training_set(x, y);
        const auto k = static_cast<Eigen::Index>(num_classes);
        GaussianNb m;
        m.mean = FeatureMatrix::Zero(k, x.cols());
        m.var = FeatureMatrix::Constant(k, x.cols(), 1.0);
        m.log_prior.assign(num_classes, -std::numeric_limits<double>::infinity());
        std::vector<std::size_t> count(num_classes, 0);
        for (int c : y) ++count[static_cast<std::size_t>(c)];
        for (std::size_t c = 0; c < num_classes; ++c) {
            if (count[c] == 0) continue;
            if (count[c] < 2) throw Error("class " + std::string(class_names[c]) + " has fewer than 2 samples");
            const auto ci = static_cast<Eigen::Index>(c);
            Eigen::RowVectorXd s = Eigen::RowVectorXd::Zero(x.cols());
            for (Eigen::Index i = 0; i < x.rows(); ++i)
                if (y[static_cast<std::size_t>(i)] == static_cast<int>(c)) s += x.row(i);
            m.mean.row(ci) = s / static_cast<double>(count[c]);
            Eigen::RowVectorXd v = Eigen::RowVectorXd::Zero(x.cols());
            for (Eigen::Index i = 0; i < x.rows(); ++i)
                if (y[static_cast<std::size_t>(i)] == static_cast<int>(c))
                    v += (x.row(i) - m.mean.row(ci)).array().square().matrix();
            m.var.row(ci) = (v / static_cast<double>(count[c])).array().max(var_floor).matrix();
            m.log_prior[c] = std::log(static_cast<double>(count[c]) / static_cast<double>(y.size()));
        }
        return m;
    }

    Eigen::Index dim() const { return mean.cols(); }

    /// log P(c) + sum_j log N(x_j; mean_cj, var_cj)
    double log_joint(std::span<const double> q, std::size_t c) const {
        if (std::isinf(log_prior[c])) return log_prior[c];
        double s = log_prior[c];
        const auto ci = static_cast<Eigen::Index>(c);
        for (Eigen::Index j = 0; j < dim(); ++j) {
            const double v = var(ci, j);
            const double d = q[static_cast<std::size_t>(j)] - mean(ci, j);
            s += -0.5 * std::log(2.0 * std::numbers::pi * v) - d * d / (2.0 * v);
        }
        return s;
    }

    int predict(std::span<const double> q) const {
        detail::check_dim(q, dim());
        int best = 0;
        double best_score = -std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < num_classes; ++c) {
            const double s = log_joint(q, c);
            if (s > best_score) {
                best_score = s;
                best = static_cast<int>(c);
            }
        }
        return best;
    }

    void write(ByteWriter& w) const {
        detail::put_matrix(w, mean);
        detail::put_matrix(w, var);
        for (double p : log_prior) w.put<double>(p);
    }
    static GaussianNb read(ByteReader& r) {
        GaussianNb m;
        m.mean = detail::get_matrix(r);
        m.var = detail::get_matrix(r);
        if (m.mean.rows() != static_cast<Eigen::Index>(num_classes) || m.var.rows() != m.mean.rows() ||
            m.var.cols() != m.mean.cols())
            throw ParseError("naive Bayes body is inconsistent", r.offset());
        m.log_prior.resize(num_classes);
        for (double& p : m.log_prior) p = r.get<double>();
        return m;
    }
};

// ---------------------------------------------------------------------------
// CART decision tree

struct TreeParams {
    std::size_t max_depth = 16;
    std::size_t min_leaf = 4;
};

struct TreeNode {
    std::int32_t feature = -1;  ///< -1 marks a leaf
    double threshold = 0.0;     ///< go left when x[feature] <= threshold
    std::int32_t left = -1;
    std::int32_t right = -1;
    std::int32_t label = 0;     ///< majority class of the node's training rows
    std::uint32_t depth = 0;
    std::uint32_t count = 0;
};

struct SplitChoice {
    int feature = -1;
    double threshold = 0.0;
    double cost = std::numeric_limits<double>::infinity();  ///< n_L*gini_L + n_R*gini_R
};

/// Exhaustive Gini search over midpoints between consecutive distinct values.
/// Ties go to the lowest feature, then the lowest threshold.
inline SplitChoice best_split(const FeatureMatrix& x, const Labels& y, std::span<const std::size_t> rows,
                              std::size_t min_leaf) {
    SplitChoice best;
    const std::size_t n = rows.size();
    std::vector<std::size_t> order(rows.begin(), rows.end());
    std::vector<double> total(num_classes, 0.0);
    for (std::size_t r : rows) total[static_cast<std::size_t>(y[r])] += 1.0;
    std::vector<double> left(num_classes);
    for (Eigen::Index f = 0; f < x.cols(); ++f) {
        std::ranges::sort(order, [&](std::size_t a, std::size_t b) {
            const double va = x(static_cast<Eigen::Index>(a), f), vb = x(static_cast<Eigen::Index>(b), f);
            return va < vb || (va == vb && a < b);
        });
        std::ranges::fill(left, 0.0);
        double sq_left = 0.0;
        double sq_right = 0.0;
        for (double t : total) sq_right += t * t;
        for (std::size_t k = 0; k + 1 < n; ++k) {
            const auto c = static_cast<std::size_t>(y[order[k]]);
            const double right_c = total[c] - left[c];
            sq_left += 2.0 * left[c] + 1.0;
            sq_right -= 2.0 * right_c - 1.0;
            left[c] += 1.0;
            const std::size_t n_left = k + 1, n_right = n - n_left;
            if (n_left < min_leaf || n_right < min_leaf) continue;
            const double v = x(static_cast<Eigen::Index>(order[k]), f);
            const double v_next = x(static_cast<Eigen::Index>(order[k + 1]), f);
            if (!(v < v_next)) continue;
            const double cost = (static_cast<double>(n_left) - sq_left / static_cast<double>(n_left)) +
                                (static_cast<double>(n_right) - sq_right / static_cast<double>(n_right));
            if (cost < best.cost) {
                double mid = 0.5 * (v + v_next);
                if (!(mid < v_next)) mid = v;
                best = {static_cast<int>(f), mid, cost};
            }
        }
    }
    return best;
}

struct DecisionTree {
    std::vector<TreeNode> nodes;
    Eigen::Index n_features = 0;
    TreeParams params;

    static DecisionTree fit(const FeatureMatrix& x, const Labels& y, TreeParams params = {}) {
        detail::check_training_set(x, y);
        if (params.min_leaf < 1) throw ConfigError("min_leaf must be >= 1");
        DecisionTree t;
        t.n_features = x.cols();
        t.params = params;
        std::vector<std::size_t> rows(y.size());
        std::iota(rows.begin(), rows.end(), 0);
        t.grow(x, y, rows, 0);
        return t;
    }

    Eigen::Index dim() const { return n_features; }

    int predict(std::span<const double> q) const {
        detail::check_dim(q, dim());
        std::size_t i = 0;
        while (nodes[i].feature >= 0)
            i = static_cast<std::size_t>(q[static_cast<std::size_t>(nodes[i].feature)] <= nodes[i].threshold
                                             ? nodes[i].left
                                             : nodes[i].right);
        return nodes[i].label;
    }

    std::size_t depth() const {
        std::uint32_t d = 0;
        for (const auto& n : nodes) d = std::max(d, n.depth);
        return d;
    }

    void write(ByteWriter& w) const {
        w.put<std::uint64_t>(static_cast<std::uint64_t>(n_features));
        w.put<std::uint64_t>(params.max_depth);
        w.put<std::uint64_t>(params.min_leaf);
        w.put<std::uint64_t>(nodes.size());
        for (const auto& n : nodes) {
            w.put<std::int32_t>(n.feature);
            w.put<double>(n.threshold);
            w.put<std::int32_t>(n.left);
            w.put<std::int32_t>(n.right);
            w.put<std::int32_t>(n.label);
            w.put<std::uint32_t>(n.depth);
            w.put<std::uint32_t>(n.count);
        }
    }

    static DecisionTree read(ByteReader& r) {
        DecisionTree t;
        t.n_features = static_cast<Eigen::Index>(r.get<std::uint64_t>());
        t.params.max_depth = r.get<std::uint64_t>();
        t.params.min_leaf = r.get<std::uint64_t>();
        const std::size_t at = r.offset();
        const auto count = r.get<std::uint64_t>();
        if (count == 0 || count > r.remaining() / 32) throw ParseError("implausible tree size", at);
        t.nodes.resize(static_cast<std::size_t>(count));
        for (auto& n : t.nodes) {
            const std::size_t here = r.offset();
            n.feature = r.get<std::int32_t>();
            n.threshold = r.get<double>();
            n.left = r.get<std::int32_t>();
            n.right = r.get<std::int32_t>();
            n.label = r.get<std::int32_t>();
            n.depth = r.get<std::uint32_t>();
            n.count = r.get<std::uint32_t>();
            const auto self = static_cast<std::int64_t>(&n - t.nodes.data());
            const auto size = static_cast<std::int64_t>(count);
            const bool leaf = n.feature < 0;
            if (n.label < 0 || n.label >= static_cast<int>(num_classes) || n.feature >= t.n_features ||
                (!leaf && (n.left <= self || n.right <= self || n.left >= size || n.right >= size)))
                throw ParseError("invalid tree node", here);
        }
        return t;
    }

private:
    int grow(const FeatureMatrix& x, const Labels& y, std::span<const std::size_t> rows, std::uint32_t depth) {
        std::vector<std::size_t> count(num_classes, 0);
        for (std::size_t r : rows) ++count[static_cast<std::size_t>(y[r])];
        const auto majority = static_cast<int>(std::ranges::max_element(count) - count.begin());
        const bool pure = count[static_cast<std::size_t>(majority)] == rows.size();

        const auto id = static_cast<int>(nodes.size());
        nodes.push_back({-1, 0.0, -1, -1, majority, depth, static_cast<std::uint32_t>(rows.size())});
        if (pure || depth >= params.max_depth || rows.size() < 2 * params.min_leaf) return id;
        const SplitChoice s = best_split(x, y, rows, params.min_leaf);
        if (s.feature < 0) return id;

        std::vector<std::size_t> lo, hi;
        for (std::size_t r : rows) (x(static_cast<Eigen::Index>(r), s.feature) <= s.threshold ? lo : hi).push_back(r);
        nodes[static_cast<std::size_t>(id)].feature = s.feature;
        nodes[static_cast<std::size_t>(id)].threshold = s.threshold;
        const int l = grow(x, y, lo, depth + 1);
        const int h = grow(x, y, hi, depth + 1);
        nodes[static_cast<std::size_t>(id)].left = l;
        nodes[static_cast<std::size_t>(id)].right = h;
        return id;
    }
};

// ---------------------------------------------------------------------------
// One-vs-rest RBF SVM trained by SMO

struct SvmParams {
    double c = 1.0;
    double gamma = 1.0 / 32.0;
    double tolerance = 1e-3;          ///< stop when the maximal KKT violation falls below this
    std::size_t max_iter = 1000000;   ///< SMO pair updates per binary problem
};

/// Dual solution of one binary soft-margin problem (labels +1 / -1).
struct BinarySvm {
    std::vector<double> alpha;
    double rho = 0.0;  ///< decision = sum_i alpha_i y_i K(x_i, x) - rho
    std::size_t iterations = 0;
    bool converged = false;
};

inline FeatureMatrix rbf_kernel(const FeatureMatrix& a, const FeatureMatrix& b, double gamma) {
    const Eigen::VectorXd na = a.rowwise().squaredNorm();
    const Eigen::VectorXd nb = b.rowwise().squaredNorm();
    FeatureMatrix k = -2.0 * a * b.transpose();
    k.colwise() += na;
    k.rowwise() += nb.transpose();
    return (-gamma * k.array().max(0.0)).exp().matrix();
}

/// Second-order working-set SMO on a precomputed kernel.
inline BinarySvm smo_solve(const FeatureMatrix& k, std::span<const int> y, const SvmParams& p) {
    constexpr double tau = 1e-12;
    const std::size_t n = y.size();
    const double c = p.c;
    BinarySvm out;
    out.alpha.assign(n, 0.0);
    std::vector<double>& a = out.alpha;
    std::vector<double> g(n, -1.0);  // gradient of 0.5 a'Qa - e'a
    auto kk = [&](std::size_t i, std::size_t j) { return k(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)); };
    auto up = [&](std::size_t t) { return y[t] > 0 ? a[t] < c : a[t] > 0.0; };
    auto low = [&](std::size_t t) { return y[t] > 0 ? a[t] > 0.0 : a[t] < c; };

    for (; out.iterations < p.max_iter; ++out.iterations) {
        double gmax = -std::numeric_limits<double>::infinity();
        std::size_t i = n;
        for (std::size_t t = 0; t < n; ++t)
            if (up(t) && -y[t] * g[t] > gmax) {
                gmax = -y[t] * g[t];
                i = t;
            }
        if (i == n) {
            out.converged = true;
            break;
        }
        double gmin = std::numeric_limits<double>::infinity();
        double best_obj = std::numeric_limits<double>::infinity();
        std::size_t j = n;
        for (std::size_t t = 0; t < n; ++t) {
            if (!low(t)) continue;
            const double v = -y[t] * g[t];
            gmin = std::min(gmin, v);
            const double b = gmax - v;
            if (b > 0.0) {
                double quad = kk(i, i) + kk(t, t) - 2.0 * kk(i, t);
                if (quad <= 0.0) quad = tau;
                const double obj = -b * b / quad;
                if (obj < best_obj) {
                    best_obj = obj;
                    j = t;
                }
            }
        }
        if (gmax - gmin < p.tolerance || j == n) {
            out.converged = true;
            break;
        }

        const double ai = a[i], aj = a[j];
        const double qij = y[i] * y[j] * kk(i, j);
        if (y[i] != y[j]) {
            double quad = kk(i, i) + kk(j, j) + 2.0 * qij;
            if (quad <= 0.0) quad = tau;
            const double delta = (-g[i] - g[j]) / quad;
            const double diff = a[i] - a[j];
            a[i] += delta;
            a[j] += delta;
            if (diff > 0.0) {
                if (a[j] < 0.0) { a[j] = 0.0; a[i] = diff; }
            } else if (a[i] < 0.0) {
                a[i] = 0.0;
                a[j] = -diff;
            }
            if (diff > 0.0) {
                if (a[i] > c) { a[i] = c; a[j] = c - diff; }
            } else if (a[j] > c) {
                a[j] = c;
                a[i] = c + diff;
            }
        } else {
            double quad = kk(i, i) + kk(j, j) - 2.0 * qij;
            if (quad <= 0.0) quad = tau;
            const double delta = (g[i] - g[j]) / quad;
            const double sum = a[i] + a[j];
            a[i] -= delta;
            a[j] += delta;
            if (sum > c) {
                if (a[i] > c) { a[i] = c; a[j] = sum - c; }
            } else if (a[j] < 0.0) {
                a[j] = 0.0;
                a[i] = sum;
            }
            if (sum > c) {
                if (a[j] > c) { a[j] = c; a[i] = sum - c; }
            } else if (a[i] < 0.0) {
                a[i] = 0.0;
                a[j] = sum;
            }
        }
        const double dai = a[i] - ai, daj = a[j] - aj;
        for (std::size_t t = 0; t < n; ++t) g[t] += y[t] * (y[i] * kk(i, t) * dai + y[j] * kk(j, t) * daj);
    }

    double ub = std::numeric_limits<double>::infinity(), lb = -ub, sum_free = 0.0;
    std::size_t n_free = 0;
    for (std::size_t t = 0; t < n; ++t) {
        const double yg = y[t] * g[t];
        if (a[t] >= c) {
            if (y[t] < 0) ub = std::min(ub, yg); else lb = std::max(lb, yg);
        } else if (a[t] <= 0.0) {
            if (y[t] > 0) ub = std::min(ub, yg); else lb = std::max(lb, yg);
        } else {
            ++n_free;
            sum_free += yg;
        }
    }
    out.rho = n_free > 0 ? sum_free / static_cast<double>(n_free) : 0.5 * (ub + lb);
    return out;
}

struct RbfSvm {
    SvmParams params;
    FeatureMatrix support;        ///< rows with a non-zero dual in any binary problem
    FeatureMatrix coef;           ///< classes x support: alpha_i * y_i per problem
    std::vector<double> rho;      ///< per class; NaN for classes absent in training
    std::vector<std::string> warnings;

    static RbfSvm fit(const FeatureMatrix& x, const Labels& y, SvmParams params = {}) {
        detail::check_training_set(x, y);
        std::vector<bool> present(num_classes, false);
        for (int c : y) present[static_cast<std::size_t>(c)] = true;
        if (std::ranges::count(present, true) < 2) throw Error("SVM needs at least two classes");
        if (!(params.c > 0.0) || !(params.gamma > 0.0)) throw ConfigError("SVM C and gamma must be positive");

        const FeatureMatrix k = rbf_kernel(x, x, params.gamma);
        const auto n = static_cast<Eigen::Index>(y.size());
        FeatureMatrix full = FeatureMatrix::Zero(static_cast<Eigen::Index>(num_classes), n);
        RbfSvm m;
        m.params = params;
        m.rho.assign(num_classes, std::numeric_limits<double>::quiet_NaN());
        std::vector<int> yy(y.size());
        for (std::size_t c = 0; c < num_classes; ++c) {
            if (!present[c]) continue;
            for (std::size_t i = 0; i < y.size(); ++i) yy[i] = y[i] == static_cast<int>(c) ? 1 : -1;
            const BinarySvm b = smo_solve(k, yy, params);
            if (!b.converged)
                m.warnings.push_back("class " + std::string(class_names[c]) + ": SMO stopped after " +
                                     std::to_string(b.iterations) + " iterations without meeting the tolerance");
            for (Eigen::Index i = 0; i < n; ++i)
                full(static_cast<Eigen::Index>(c), i) = b.alpha[static_cast<std::size_t>(i)] * yy[static_cast<std::size_t>(i)];
            m.rho[c] = b.rho;
        }
        std::vector<Eigen::Index> keep;
        for (Eigen::Index i = 0; i < n; ++i)
            if (full.col(i).cwiseAbs().maxCoeff() > 0.0) keep.push_back(i);
        m.support.resize(static_cast<Eigen::Index>(keep.size()), x.cols());
        m.coef.resize(full.rows(), static_cast<Eigen::Index>(keep.size()));
        for (std::size_t s = 0; s < keep.size(); ++s) {
            m.support.row(static_cast<Eigen::Index>(s)) = x.row(keep[s]);
            m.coef.col(static_cast<Eigen::Index>(s)) = full.col(keep[s]);
        }
        return m;
    }

    Eigen::Index dim() const { return support.cols(); }

    std::vector<double> decision_values(std::span<const double> q) const {
        detail::check_dim(q, dim());
        Eigen::VectorXd kv(support.rows());
        for (Eigen::Index s = 0; s < support.rows(); ++s) {
            double d = 0.0;
            for (Eigen::Index j = 0; j < dim(); ++j) {
                const double e = support(s, j) - q[static_cast<std::size_t>(j)];
                d += e * e;
            }
            kv[s] = std::exp(-params.gamma * d);
        }
        const Eigen::VectorXd f = coef * kv;
        std::vector<double> out(num_classes, -std::numeric_limits<double>::infinity());
        for (std::size_t c = 0; c < num_classes; ++c)
            if (!std::isnan(rho[c])) out[c] = f[static_cast<Eigen::Index>(c)] - rho[c];
        return out;
    }

    int predict(std::span<const double> q) const {
        const auto f = decision_values(q);
        return static_cast<int>(std::ranges::max_element(f) - f.begin());
    }

    void write(ByteWriter& w) const {
        w.put<double>(params.c);
        w.put<double>(params.gamma);
        detail::put_matrix(w, support);
        detail::put_matrix(w, coef);
        for (double r : rho) w.put<double>(r);
    }
    static RbfSvm read(ByteReader& r) {
        RbfSvm m;
        m.params.c = r.get<double>();
        m.params.gamma = r.get<double>();
        m.support = detail::get_matrix(r);
        m.coef = detail::get_matrix(r);
        if (m.coef.rows() != static_cast<Eigen::Index>(num_classes) || m.coef.cols() != m.support.rows())
            throw ParseError("SVM body is inconsistent", r.offset());
        m.rho.resize(num_classes);
        for (double& v : m.rho) v = r.get<double>();
        return m;
    }
};

// ---------------------------------------------------------------------------
// Uniform wrapper

enum class BaselineKind { knn1, gaussian_nb, decision_tree, rbf_svm };

inline constexpr std::array<std::string_view, 4> baseline_names = {"knn1", "gnb", "tree", "svm"};

inline std::string_view baseline_name(BaselineKind k) { return baseline_names[static_cast<std::size_t>(k)]; }

inline std::optional<BaselineKind> parse_baseline(std::string_view s) {
    for (std::size_t i = 0; i < baseline_names.size(); ++i)
        if (baseline_names[i] == s) return static_cast<BaselineKind>(i);
    return std::nullopt;
}

struct BaselineParams {
    TreeParams tree;
    SvmParams svm;
};

/// A fitted feature classifier plus the standardizer its inputs went through.
class TrainedClassifier {
public:
    using Model = std::variant<Knn1, GaussianNb, DecisionTree, RbfSvm>;

    TrainedClassifier(Model m, std::optional<Standardizer> scaler = std::nullopt)
        : model_(std::move(m)), scaler_(std::move(scaler)) {}

    static TrainedClassifier fit(BaselineKind kind, const FeatureMatrix& x, const Labels& y,
                                 const BaselineParams& p = {}, std::optional<Standardizer> scaler = std::nullopt) {
        const FeatureMatrix z = scaler ? scaler->apply(x) : x;
        switch (kind) {
        case BaselineKind::knn1: return {Knn1::fit(z, y), std::move(scaler)};
        case BaselineKind::gaussian_nb: return {GaussianNb::fit(z, y), std::move(scaler)};
        case BaselineKind::decision_tree: return {DecisionTree::fit(z, y, p.tree), std::move(scaler)};
        case BaselineKind::rbf_svm: return {RbfSvm::fit(z, y, p.svm), std::move(scaler)};
        }
        throw Error("unknown classifier kind");
    }

    BaselineKind kind() const { return static_cast<BaselineKind>(model_.index()); }
    const Model& model() const noexcept { return model_; }
    const std::optional<Standardizer>& scaler() const noexcept { return scaler_; }
    std::size_t class_count() const noexcept { return num_classes; }

    Eigen::Index dim() const {
        return std::visit([](const auto& m) { return m.dim(); }, model_);
    }

    std::vector<std::string> warnings() const {
        if (const auto* s = std::get_if<RbfSvm>(&model_)) return s->warnings;
        return {};
    }

    /// Predicts raw (unstandardized) feature rows.
    Labels predict(const FeatureMatrix& x) const {
        const FeatureMatrix z = scaler_ ? scaler_->apply(x) : x;
        if (z.cols() != dim()) throw Error("feature dimension does not match model");
        Labels out(static_cast<std::size_t>(z.rows()));
        std::visit(
            [&](const auto& m) {
                for (Eigen::Index i = 0; i < z.rows(); ++i) out[static_cast<std::size_t>(i)] = m.predict(detail::row(z, i));
            },
            model_);
        return out;
    }

    std::vector<std::uint8_t> serialize() const {
        ByteWriter w;
        begin_model(w, std::string(baseline_name(kind())));
        w.put<std::uint8_t>(scaler_ ? 1 : 0);
        if (scaler_) {
            detail::put_matrix(w, scaler_->mean);
            detail::put_matrix(w, scaler_->scale);
        }
        std::visit([&](const auto& m) { m.write(w); }, model_);
        return w.take();
    }

    static TrainedClassifier deserialize(std::span<const std::uint8_t> bytes) {
        ByteReader r(bytes);
        const std::string name = open_model(r);
        const auto kind = parse_baseline(name);
        if (!kind) throw ParseError("model kind '" + name + "' is not a feature classifier", 6);
        std::optional<Standardizer> scaler;
        const std::size_t flag_at = r.offset();
        const auto flag = r.get<std::uint8_t>();
        if (flag > 1) throw ParseError("bad standardizer flag", flag_at);
        if (flag) {
            const FeatureMatrix mean = detail::get_matrix(r);
            const FeatureMatrix scale = detail::get_matrix(r);
            if (mean.rows() != 1 || scale.rows() != 1 || mean.cols() != scale.cols())
                throw ParseError("standardizer shape is inconsistent", r.offset());
            scaler = Standardizer{mean.row(0), scale.row(0)};
        }
        auto finish = [&](Model m) {
            if (!r.at_end()) throw ParseError("trailing bytes after model body", r.offset());
            return TrainedClassifier(std::move(m), std::move(scaler));
        };
        switch (*kind) {
        case BaselineKind::knn1: return finish(Knn1::read(r));
        case BaselineKind::gaussian_nb: return finish(GaussianNb::read(r));
        case BaselineKind::decision_tree: return finish(DecisionTree::read(r));
        case BaselineKind::rbf_svm: return finish(RbfSvm::read(r));
        }
        throw Error("unknown classifier kind");
    }

private:
    Model model_;
    std::optional<Standardizer> scaler_;
};

} // namespace modrec
