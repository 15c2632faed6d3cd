// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "modrec/error.hpp"
#include "modrec/nn/tensor.hpp"
#include "modrec/rng.hpp"

namespace modrec::nn {

// ---------------------------------------------------------------------------
// Convolution (valid cross-correlation, stride 1)

/// Columns of the im2col matrix: row r = (c*KH + di)*KW + dj, column b*P + i*OW + j.
template <typename T>
RowMatrix<T> im2col(const Tensor<T>& x, std::size_t kh, std::size_t kw) {
    const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    const std::size_t oh = h - kh + 1, ow = w - kw + 1, p = oh * ow;
    RowMatrix<T> col(static_cast<Eigen::Index>(c * kh * kw), static_cast<Eigen::Index>(n * p));
    for (std::size_t ci = 0; ci < c; ++ci)
        for (std::size_t di = 0; di < kh; ++di)
            for (std::size_t dj = 0; dj < kw; ++dj) {
                T* dst = col.row(static_cast<Eigen::Index>((ci * kh + di) * kw + dj)).data();
                for (std::size_t b = 0; b < n; ++b)
                    for (std::size_t i = 0; i < oh; ++i)
                        std::copy_n(&x.at(b, ci, i + di, dj), ow, dst + b * p + i * ow);
            }
    return col;
}

template <typename T>
void check_conv_shapes(const Tensor<T>& x, const Tensor<T>& w) {
    if (x.dim(1) != w.dim(1))
        throw Error("conv2d channel mismatch: input " + shape_str(x.shape()) + ", kernel " + shape_str(w.shape()));
    if (w.dim(2) > x.dim(2) || w.dim(3) > x.dim(3) || w.dim(2) == 0 || w.dim(3) == 0)
        throw Error("conv2d kernel " + shape_str(w.shape()) + " does not fit input " + shape_str(x.shape()));
}

/// out[f, i, j] = b[f] + sum_{c,di,dj} x[c, i+di, j+dj] * w[f, c, di, dj]
template <typename T>
Tensor<T> conv2d_forward(const Tensor<T>& x, const Tensor<T>& w, std::span<const T> bias) {
    check_conv_shapes(x, w);
    const std::size_t n = x.dim(0), f = w.dim(0), kh = w.dim(2), kw = w.dim(3);
    if (bias.size() != f) throw Error("conv2d bias length mismatch");
    const std::size_t oh = x.dim(2) - kh + 1, ow = x.dim(3) - kw + 1, p = oh * ow;
    const RowMatrix<T> col = im2col(x, kh, kw);
    const ConstMatrixMap<T> wm(w.data(), static_cast<Eigen::Index>(f), static_cast<Eigen::Index>(w.per_sample()));
    RowMatrix<T> o = wm * col;
    Tensor<T> out({n, f, oh, ow});
    for (std::size_t b = 0; b < n; ++b)
        for (std::size_t fi = 0; fi < f; ++fi) {
            const T* src = o.row(static_cast<Eigen::Index>(fi)).data() + b * p;
            T* dst = &out.at(b, fi, 0, 0);
            for (std::size_t k = 0; k < p; ++k) dst[k] = src[k] + bias[fi];
        }
    return out;
}

template <typename T>
struct ConvGrads {
    Tensor<T> x;
    Tensor<T> w;
    std::vector<T> b;
};

template <typename T>
ConvGrads<T> conv2d_backward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& grad_out) {
    check_conv_shapes(x, w);
    const std::size_t n = x.dim(0), c = x.dim(1), f = w.dim(0), kh = w.dim(2), kw = w.dim(3);
    const std::size_t oh = x.dim(2) - kh + 1, ow = x.dim(3) - kw + 1, p = oh * ow;
    if (grad_out.shape() != Shape{n, f, oh, ow})
        throw Error("conv2d gradient shape " + shape_str(grad_out.shape()) + " does not match output " +
                    shape_str({n, f, oh, ow}));
    RowMatrix<T> g(static_cast<Eigen::Index>(f), static_cast<Eigen::Index>(n * p));
    for (std::size_t b = 0; b < n; ++b)
        for (std::size_t fi = 0; fi < f; ++fi)
            std::copy_n(&grad_out.at(b, fi, 0, 0), p, g.row(static_cast<Eigen::Index>(fi)).data() + b * p);

    ConvGrads<T> out{Tensor<T>(x.shape()), Tensor<T>(w.shape()), std::vector<T>(f)};
    const RowMatrix<T> col = im2col(x, kh, kw);
    MatrixMap<T> gw(out.w.data(), static_cast<Eigen::Index>(f), static_cast<Eigen::Index>(w.per_sample()));
    gw.noalias() = g * col.transpose();
    for (std::size_t fi = 0; fi < f; ++fi) out.b[fi] = g.row(static_cast<Eigen::Index>(fi)).sum();

    const ConstMatrixMap<T> wm(w.data(), static_cast<Eigen::Index>(f), static_cast<Eigen::Index>(w.per_sample()));
    const RowMatrix<T> gcol = wm.transpose() * g;
    for (std::size_t ci = 0; ci < c; ++ci)
        for (std::size_t di = 0; di < kh; ++di)
            for (std::size_t dj = 0; dj < kw; ++dj) {
                const T* src = gcol.row(static_cast<Eigen::Index>((ci * kh + di) * kw + dj)).data();
                for (std::size_t b = 0; b < n; ++b)
                    for (std::size_t i = 0; i < oh; ++i) {
                        T* dst = &out.x.at(b, ci, i + di, dj);
                        const T* s = src + b * p + i * ow;
                        for (std::size_t j = 0; j < ow; ++j) dst[j] += s[j];
                    }
            }
    return out;
}

// ---------------------------------------------------------------------------
// Elementwise and normalization ops

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
    Tensor<T> y = x;
    for (T& v : y.values()) v = v < T(0) ? T(0) : v;  // NaN passes through
    return y;
}

/// Row-wise softmax over the flattened per-sample features.
template <typename T>
Tensor<T> softmax(const Tensor<T>& x) {
    Tensor<T> y = x;
    auto m = y.matrix();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        auto r = m.row(i);
        r.array() -= r.maxCoeff();
        r = r.array().exp().matrix();
        r /= r.sum();
    }
    return y;
}

/// Inverted dropout mask: 0 with probability rate, 1/(1-rate) otherwise.
template <typename T>
std::vector<T> dropout_mask(std::size_t n, double rate, Rng& rng) {
    if (!(rate >= 0.0 && rate < 1.0)) throw Error("dropout rate must be in [0, 1)");
    const T keep = T(1.0 / (1.0 - rate));
    std::vector<T> mask(n);
    for (T& m : mask) m = rng.uniform() < rate ? T(0) : keep;
    return mask;
}

template <typename T>
Tensor<T> dropout(const Tensor<T>& x, double rate, bool train, SeedSpec seed) {
    if (!(rate >= 0.0 && rate < 1.0)) throw Error("dropout rate must be in [0, 1)");
    if (!train || rate == 0.0) return x;
    Rng rng(seed);
    const std::vector<T> mask = dropout_mask<T>(x.size(), rate, rng);
    Tensor<T> y = x;
    for (std::size_t i = 0; i < y.size(); ++i) y[i] *= mask[i];
    return y;
}

// ---------------------------------------------------------------------------
// Layers

enum class LayerKind { conv2d, dense, relu, softmax, dropout, flatten };

inline constexpr std::array<std::string_view, 6> layer_kind_names = {"conv2d", "dense",   "relu",
                                                                     "softmax", "dropout", "flatten"};

inline std::string_view layer_kind_name(LayerKind k) { return layer_kind_names[static_cast<std::size_t>(k)]; }

template <typename T>
struct ParamRef {
    Tensor<T>* value;
    Tensor<T>* grad;
    bool conv_weight;
};

template <typename T>
class Layer {
public:
    virtual ~Layer() = default;
    virtual LayerKind kind() const = 0;
    /// Output shape for an input shape; throws when the shapes are incompatible.
    virtual Shape output_shape(const Shape& in) const = 0;
    virtual Tensor<T> forward(const Tensor<T>& x, bool train) = 0;
    virtual Tensor<T> backward(const Tensor<T>& grad_out) = 0;
    virtual std::vector<ParamRef<T>> params() { return {}; }
};

/// Balanced fan-in/fan-out uniform initialization.
template <typename T>
void glorot_uniform(Tensor<T>& w, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    for (T& v : w.values()) v = static_cast<T>(rng.uniform(-limit, limit));
}

template <typename T>
class Conv2d final : public Layer<T> {
public:
    Conv2d(std::size_t in_channels, std::size_t filters, std::size_t kh, std::size_t kw)
        : w_({filters, in_channels, kh, kw}), b_({1, filters, 1, 1}), gw_(w_.shape()), gb_(b_.shape()) {}

    LayerKind kind() const override { return LayerKind::conv2d; }

    Shape output_shape(const Shape& in) const override {
        if (in[1] != w_.dim(1) || in[2] < w_.dim(2) || in[3] < w_.dim(3))
            throw Error("conv2d kernel " + shape_str(w_.shape()) + " incompatible with input " + shape_str(in));
        return {in[0], w_.dim(0), in[2] - w_.dim(2) + 1, in[3] - w_.dim(3) + 1};
    }

    Tensor<T> forward(const Tensor<T>& x, bool) override {
        x_ = x;
        return conv2d_forward(x, w_, std::span<const T>(b_.values()));
    }

    Tensor<T> backward(const Tensor<T>& g) override {
        ConvGrads<T> d = conv2d_backward(x_, w_, g);
        gw_ = std::move(d.w);
        std::ranges::copy(d.b, gb_.data());
        return std::move(d.x);
    }

    std::vector<ParamRef<T>> params() override { return {{&w_, &gw_, true}, {&b_, &gb_, false}}; }

    void init(Rng& rng) {
        const std::size_t k = w_.dim(2) * w_.dim(3);
        glorot_uniform(w_, w_.dim(1) * k, w_.dim(0) * k, rng);
        b_.fill(T(0));
    }

    const Tensor<T>& weight() const noexcept { return w_; }

private:
    Tensor<T> w_, b_, gw_, gb_, x_;
};

template <typename T>
class Dense : public Layer<T> {
public:
    Dense(std::size_t in, std::size_t out) : w_({out, in, 1, 1}), b_({1, out, 1, 1}), gw_(w_.shape()), gb_(b_.shape()) {}

    LayerKind kind() const override { return LayerKind::dense; }

    Shape output_shape(const Shape& in) const override {
        if (in[1] * in[2] * in[3] != w_.dim(1))
            throw Error("dense layer expects " + std::to_string(w_.dim(1)) + " inputs, got " + shape_str(in));
        return {in[0], w_.dim(0), 1, 1};
    }

    Tensor<T> forward(const Tensor<T>& x, bool) override {
        output_shape(x.shape());
        x_ = x;
        Tensor<T> y({x.batch(), w_.dim(0), 1, 1});
        y.matrix().noalias() = x.matrix() * wmat().transpose();
        y.matrix().rowwise() += bvec();
        return y;
    }

    Tensor<T> backward(const Tensor<T>& g) override {
        MatrixMap<T> gw(gw_.data(), static_cast<Eigen::Index>(w_.dim(0)), static_cast<Eigen::Index>(w_.dim(1)));
        gw.noalias() = g.matrix().transpose() * x_.matrix();
        Eigen::Map<Eigen::Matrix<T, 1, Eigen::Dynamic>>(gb_.data(), static_cast<Eigen::Index>(w_.dim(0))) =
            g.matrix().colwise().sum();
        Tensor<T> gx(x_.shape());
        gx.matrix().noalias() = g.matrix() * wmat();
        return gx;
    }

    std::vector<ParamRef<T>> params() override { return {{&w_, &gw_, false}, {&b_, &gb_, false}}; }

    void init(Rng& rng) {
        glorot_uniform(w_, w_.dim(1), w_.dim(0), rng);
        b_.fill(T(0));
    }

protected:
    ConstMatrixMap<T> wmat() const {
        return {w_.data(), static_cast<Eigen::Index>(w_.dim(0)), static_cast<Eigen::Index>(w_.dim(1))};
    }
    Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>> bvec() const {
        return {b_.data(), static_cast<Eigen::Index>(w_.dim(0))};
    }

    Tensor<T> w_, b_, gw_, gb_, x_;
};

template <typename T>
class Relu final : public Layer<T> {
public:
    LayerKind kind() const override { return LayerKind::relu; }
    Shape output_shape(const Shape& in) const override { return in; }
    Tensor<T> forward(const Tensor<T>& x, bool) override {
        y_ = relu(x);
        return y_;
    }
    Tensor<T> backward(const Tensor<T>& g) override {
        Tensor<T> gx = g;
        for (std::size_t i = 0; i < gx.size(); ++i)
            if (!(y_[i] > T(0))) gx[i] = T(0);
        return gx;
    }

private:
    Tensor<T> y_;
};

template <typename T>
class Dropout final : public Layer<T> {
public:
    Dropout(double rate, SeedSpec seed) : rate_(rate), rng_(seed) {
        if (!(rate >= 0.0 && rate < 1.0)) throw Error("dropout rate must be in [0, 1)");
    }

    LayerKind kind() const override { return LayerKind::dropout; }
    Shape output_shape(const Shape& in) const override { return in; }
    double rate() const noexcept { return rate_; }

    /// Reuses the last mask instead of drawing new ones (gradient checking).
    void freeze(bool on) noexcept { frozen_ = on; }
    void reseed(SeedSpec seed) { rng_ = Rng(seed); }

    Tensor<T> forward(const Tensor<T>& x, bool train) override {
        active_ = train && rate_ > 0.0;
        if (!active_) return x;
        if (!frozen_ || mask_.size() != x.size()) mask_ = dropout_mask<T>(x.size(), rate_, rng_);
        Tensor<T> y = x;
        for (std::size_t i = 0; i < y.size(); ++i) y[i] *= mask_[i];
        return y;
    }

    Tensor<T> backward(const Tensor<T>& g) override {
        if (!active_) return g;
        Tensor<T> gx = g;
        for (std::size_t i = 0; i < gx.size(); ++i) gx[i] *= mask_[i];
        return gx;
    }

private:
    double rate_;
    Rng rng_;
    std::vector<T> mask_;
    bool active_ = false;
    bool frozen_ = false;
};

template <typename T>
class Flatten final : public Layer<T> {
public:
    LayerKind kind() const override { return LayerKind::flatten; }
    Shape output_shape(const Shape& in) const override { return {in[0], in[1] * in[2] * in[3], 1, 1}; }
    Tensor<T> forward(const Tensor<T>& x, bool) override {
        in_ = x.shape();
        Tensor<T> y = x;
        y.reshape(output_shape(in_));
        return y;
    }
    Tensor<T> backward(const Tensor<T>& g) override {
        Tensor<T> gx = g;
        gx.reshape(in_);
        return gx;
    }

private:
    Shape in_{};
};

template <typename T>
class Softmax final : public Layer<T> {
public:
    LayerKind kind() const override { return LayerKind::softmax; }
    Shape output_shape(const Shape& in) const override { return in; }
    Tensor<T> forward(const Tensor<T>& x, bool) override {
        p_ = softmax(x);
        return p_;
    }
    /// dL/dz = p * (g - <g, p>) per row.
    Tensor<T> backward(const Tensor<T>& g) override {
        Tensor<T> gz = g;
        auto out = gz.matrix();
        const auto p = p_.matrix();
        for (Eigen::Index i = 0; i < out.rows(); ++i) {
            const T dot = out.row(i).dot(p.row(i));
            out.row(i) = (p.row(i).array() * (out.row(i).array() - dot)).matrix();
        }
        return gz;
    }

private:
    Tensor<T> p_;
};

} // namespace modrec::nn
