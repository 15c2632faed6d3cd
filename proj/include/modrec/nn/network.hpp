// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "modrec/binary_io.hpp"
#include "modrec/error.hpp"
#include "modrec/modem.hpp"
#include "modrec/nn/layers.hpp"
#include "modrec/rng.hpp"

namespace modrec::nn {

struct LayerSpec {
    LayerKind kind = LayerKind::relu;
    std::size_t filters = 0;  ///< conv2d
    std::size_t kh = 0, kw = 0;
    std::size_t units = 0;    ///< dense
    double rate = 0.0;        ///< dropout

    static LayerSpec conv(std::size_t f, std::size_t h, std::size_t w) { return {LayerKind::conv2d, f, h, w, 0, 0.0}; }
    static LayerSpec dense(std::size_t u) { return {LayerKind::dense, 0, 0, 0, u, 0.0}; }
    static LayerSpec relu() { return {LayerKind::relu}; }
    static LayerSpec dropout(double r) { return {LayerKind::dropout, 0, 0, 0, 0, r}; }
    static LayerSpec flatten() { return {LayerKind::flatten}; }
    static LayerSpec softmax() { return {LayerKind::softmax}; }

    friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

struct ModelSpec {
    std::string name;
    Shape input{0, 1, 2, 128};     ///< batch entry is ignored
    std::vector<LayerSpec> layers;
    double l2_conv = 0.0;          ///< coefficient on the summed squared conv weights
    double l1_act = 0.0;           ///< coefficient on the batch-mean L1 norm of one activation
    int l1_layer = -1;             ///< layer whose output the L1 term penalizes

    friend bool operator==(const ModelSpec&, const ModelSpec&) = default;
};

/// conv(64, 1x3) -> conv(16, 2x3) -> dense(128) -> dense(11), with weight and
/// activity penalties.
inline ModelSpec cnn_spec(double dropout = 0.5, std::size_t dense = 128, double l2_conv = 1e-4, double l1_act = 1e-5) {
    ModelSpec m;
    m.name = "CNN";
    m.layers = {LayerSpec::conv(64, 1, 3), LayerSpec::relu(),       LayerSpec::dropout(dropout),
                LayerSpec::conv(16, 2, 3), LayerSpec::relu(),       LayerSpec::dropout(dropout),
                LayerSpec::flatten(),      LayerSpec::dense(dense), LayerSpec::relu(),
                LayerSpec::dropout(dropout), LayerSpec::dense(num_classes), LayerSpec::softmax()};
    m.l2_conv = l2_conv;
    m.l1_act = l1_act;
    m.l1_layer = 8;
    return m;
}

/// Wider variant regularized by dropout only.
inline ModelSpec cnn2_spec(double dropout = 0.6) {
    ModelSpec m = cnn_spec(dropout, 256, 0.0, 0.0);
    m.name = "CNN2";
    m.layers[0].filters = 256;
    m.layers[3].filters = 80;
    m.l1_layer = -1;
    return m;
}

/// Fully connected network over the 32 expert features.
inline ModelSpec dnn_feat_spec(std::vector<std::size_t> widths = {512, 256, 128}, double dropout = 0.5,
                               std::size_t inputs = 32) {
    ModelSpec m;
    m.name = "DNN-feat";
    m.input = {0, 1, 1, inputs};
    m.layers.push_back(LayerSpec::flatten());
    for (std::size_t w : widths) {
        m.layers.push_back(LayerSpec::dense(w));
        m.layers.push_back(LayerSpec::relu());
        m.layers.push_back(LayerSpec::dropout(dropout));
    }
    m.layers.push_back(LayerSpec::dense(num_classes));
    m.layers.push_back(LayerSpec::softmax());
    return m;
}

/// Shape after every layer for a batch of one; throws on incompatibility.
inline std::vector<Shape> shape_trace(const ModelSpec& spec) {
    std::vector<Shape> out;
    Shape s = spec.input;
    s[0] = 1;
    for (const auto& l : spec.layers) {
        switch (l.kind) {
        case LayerKind::conv2d:
            if (l.filters == 0 || l.kh == 0 || l.kw == 0 || l.kh > s[2] || l.kw > s[3])
                throw ConfigError("conv2d " + std::to_string(l.kh) + "x" + std::to_string(l.kw) +
                                  " does not fit input " + shape_str(s));
            s = {1, l.filters, s[2] - l.kh + 1, s[3] - l.kw + 1};
            break;
        case LayerKind::dense:
            if (l.units == 0) throw ConfigError("dense layer needs at least one unit");
            s = {1, l.units, 1, 1};
            break;
        case LayerKind::flatten: s = {1, s[1] * s[2] * s[3], 1, 1}; break;
        case LayerKind::dropout:
            if (!(l.rate >= 0.0 && l.rate < 1.0)) throw ConfigError("dropout rate must be in [0, 1)");
            break;
        default: break;
        }
        out.push_back(s);
    }
    return out;
}

template <typename T>
class Network {
public:
    /// Builds and initializes from a spec; weights are drawn from seed.derive(init).
    Network(ModelSpec spec, SeedSpec seed) : spec_(std::move(spec)) {
        if (spec_.layers.empty() || spec_.layers.back().kind != LayerKind::softmax)
            throw ConfigError("model must end in a softmax layer");
        if (spec_.l1_layer >= static_cast<int>(spec_.layers.size())) throw ConfigError("l1_layer out of range");
        if (spec_.l2_conv < 0.0 || spec_.l1_act < 0.0) throw ConfigError("penalty coefficients must be >= 0");
        shapes_ = shape_trace(spec_);
        Rng init(seed.derive(stream::init));
        Shape s = spec_.input;
        s[0] = 1;
        for (std::size_t i = 0; i < spec_.layers.size(); ++i) {
            const LayerSpec& l = spec_.layers[i];
            switch (l.kind) {
            case LayerKind::conv2d: {
                auto c = std::make_unique<Conv2d<T>>(s[1], l.filters, l.kh, l.kw);
                c->init(init);
                layers_.push_back(std::move(c));
                break;
            }
            case LayerKind::dense: {
                auto d = std::make_unique<Dense<T>>(s[1] * s[2] * s[3], l.units);
                d->init(init);
                layers_.push_back(std::move(d));
                break;
            }
            case LayerKind::relu: layers_.push_back(std::make_unique<Relu<T>>()); break;
            case LayerKind::dropout:
                layers_.push_back(std::make_unique<Dropout<T>>(l.rate, seed.derive(stream::dropout).derive(i)));
                break;
            case LayerKind::flatten: layers_.push_back(std::make_unique<Flatten<T>>()); break;
            case LayerKind::softmax: layers_.push_back(std::make_unique<Softmax<T>>()); break;
            }
            s = layers_.back()->output_shape(s);
            if (s != shapes_[i]) throw Error("internal shape mismatch at layer " + std::to_string(i));
        }
    }

    /// Assembles a network from prebuilt layers (tests and custom topologies).
    Network(Shape input, std::vector<std::unique_ptr<Layer<T>>> layers, double l2_conv = 0.0, double l1_act = 0.0,
            int l1_layer = -1)
        : layers_(std::move(layers)) {
        spec_.name = "custom";
        spec_.input = input;
        spec_.l2_conv = l2_conv;
        spec_.l1_act = l1_act;
        spec_.l1_layer = l1_layer;
        Shape s = input;
        s[0] = 1;
        for (auto& l : layers_) {
            s = l->output_shape(s);
            shapes_.push_back(s);
        }
        if (layers_.empty() || layers_.back()->kind() != LayerKind::softmax)
            throw ConfigError("model must end in a softmax layer");
    }

    const ModelSpec& spec() const noexcept { return spec_; }
    const std::vector<Shape>& shapes() const noexcept { return shapes_; }
    std::size_t num_layers() const noexcept { return layers_.size(); }
    Layer<T>& layer(std::size_t i) { return *layers_[i]; }
    std::size_t num_classes_out() const { return shapes_.back()[1]; }

    std::vector<ParamRef<T>> params() {
        std::vector<ParamRef<T>> out;
        for (auto& l : layers_)
            for (auto& p : l->params()) out.push_back(p);
        return out;
    }

    std::size_t param_count() {
        std::size_t n = 0;
        for (auto& p : params()) n += p.value->size();
        return n;
    }

    void check_input(const Tensor<T>& x) const {
        const Shape& s = x.shape();
        if (s[1] != spec_.input[1] || s[2] != spec_.input[2] || s[3] != spec_.input[3])
            throw Error("input shape " + shape_str(s) + " does not match model input " + shape_str(spec_.input));
    }

    /// Output of every layer except the trailing softmax.
    Tensor<T> logits(const Tensor<T>& x, bool train) {
        check_input(x);
        Tensor<T> h = x;
        for (std::size_t i = 0; i + 1 < layers_.size(); ++i) {
            h = layers_[i]->forward(h, train);
            if (static_cast<int>(i) == spec_.l1_layer) activation_ = h;
        }
        return h;
    }

    Tensor<T> forward(const Tensor<T>& x, bool train) { return layers_.back()->forward(logits(x, train), train); }

    /// Activation penalized by the L1 term, from the latest forward pass.
    const Tensor<T>& penalized_activation() const noexcept { return activation_; }

    /// Sum of the two penalty terms at the current weights and activation.
    double penalty() {
        double s = 0.0;
        if (spec_.l2_conv > 0.0)
            for (auto& p : params())
                if (p.conv_weight)
                    for (T v : p.value->values()) s += spec_.l2_conv * static_cast<double>(v) * static_cast<double>(v);
        if (spec_.l1_act > 0.0 && spec_.l1_layer >= 0 && activation_.size() > 0) {
            double a = 0.0;
            for (T v : activation_.values()) a += std::abs(static_cast<double>(v));
            s += spec_.l1_act * a / static_cast<double>(activation_.batch());
        }
        return s;
    }

    /// Forward and backward for cross-entropy plus penalties; fills the
    /// parameter gradients and returns the objective. `fused` feeds (p - y)/B
    /// straight into the logits; otherwise the gradient passes through the
    /// softmax layer's own backward.
    double compute_gradients(const Tensor<T>& x, std::span<const int> labels, bool train, bool fused = true) {
        if (labels.size() != x.batch()) throw Error("label count does not match batch");
        const Tensor<T> z = logits(x, train);
        probs_ = layers_.back()->forward(z, train);
        const Tensor<T>& p = probs_;
        const std::size_t b = x.batch(), k = p.per_sample();
        double ce = 0.0;
        for (std::size_t i = 0; i < b; ++i) {
            const auto y = static_cast<std::size_t>(labels[i]);
            if (y >= k) throw Error("label out of range");
            ce -= std::log(std::max(static_cast<double>(p[i * k + y]), 1e-300));
        }
        const double loss = ce / static_cast<double>(b) + penalty();
        if (!std::isfinite(loss)) return loss;

        Tensor<T> g(p.shape());
        const T inv_b = T(1) / static_cast<T>(b);
        if (fused) {
            for (std::size_t i = 0; i < g.size(); ++i) g[i] = p[i] * inv_b;
            for (std::size_t i = 0; i < b; ++i) g[i * k + static_cast<std::size_t>(labels[i])] -= inv_b;
        } else {
            for (std::size_t i = 0; i < b; ++i) {
                const auto y = static_cast<std::size_t>(labels[i]);
                g[i * k + y] = -inv_b / p[i * k + y];
            }
            g = layers_.back()->backward(g);
        }
        for (std::size_t i = layers_.size() - 1; i-- > 0;) {
            if (static_cast<int>(i) == spec_.l1_layer && spec_.l1_act > 0.0) {
                const T c = static_cast<T>(spec_.l1_act) * inv_b;
                for (std::size_t j = 0; j < g.size(); ++j)
                    g[j] += activation_[j] > T(0) ? c : activation_[j] < T(0) ? -c : T(0);
            }
            g = layers_[i]->backward(g);
        }
        if (spec_.l2_conv > 0.0)
            for (auto& prm : params())
                if (prm.conv_weight)
                    for (std::size_t j = 0; j < prm.value->size(); ++j)
                        (*prm.grad)[j] += static_cast<T>(2.0 * spec_.l2_conv) * (*prm.value)[j];
        return loss;
    }

    /// Probabilities from the latest compute_gradients call.
    const Tensor<T>& last_probs() const noexcept { return probs_; }

    /// Names the first layer whose output is non-finite for this batch.
    std::string diagnose(const Tensor<T>& x, bool train) {
        Tensor<T> h = x;
        if (!h.all_finite()) return "input";
        for (std::size_t i = 0; i < layers_.size(); ++i) {
            h = layers_[i]->forward(h, train);
            if (!h.all_finite()) return "layer " + std::to_string(i) + " (" + std::string(layer_kind_name(layers_[i]->kind())) + ")";
        }
        for (std::size_t i = 0; i < layers_.size(); ++i)
            for (auto& p : layers_[i]->params())
                if (!p.value->all_finite()) return "weights of layer " + std::to_string(i);
        return "loss";
    }

    void set_dropout_frozen(bool on) {
        for (auto& l : layers_)
            if (auto* d = dynamic_cast<Dropout<T>*>(l.get())) d->freeze(on);
    }

    /// Copies of all parameter values, in params() order.
    std::vector<std::vector<T>> weights() {
        std::vector<std::vector<T>> out;
        for (auto& p : params()) out.emplace_back(p.value->values().begin(), p.value->values().end());
        return out;
    }

    void set_weights(const std::vector<std::vector<T>>& w) {
        auto ps = params();
        if (w.size() != ps.size()) throw Error("parameter tensor count mismatch");
        for (std::size_t i = 0; i < ps.size(); ++i) {
            if (w[i].size() != ps[i].value->size()) throw Error("parameter size mismatch");
            std::ranges::copy(w[i], ps[i].value->data());
        }
    }

    std::vector<std::uint8_t> serialize() {
        ByteWriter w;
        begin_model(w, "nn");
        w.put_string(spec_.name);
        for (std::size_t d = 1; d < 4; ++d) w.put<std::uint64_t>(spec_.input[d]);
        w.put<std::uint64_t>(spec_.layers.size());
        for (const auto& l : spec_.layers) {
            w.put<std::uint8_t>(static_cast<std::uint8_t>(l.kind));
            w.put<std::uint64_t>(l.filters);
            w.put<std::uint64_t>(l.kh);
            w.put<std::uint64_t>(l.kw);
            w.put<std::uint64_t>(l.units);
            w.put<double>(l.rate);
        }
        w.put<double>(spec_.l2_conv);
        w.put<double>(spec_.l1_act);
        w.put<std::int32_t>(spec_.l1_layer);
        const auto ps = params();
        w.put<std::uint64_t>(ps.size());
        for (const auto& p : ps) {
            w.put<std::uint64_t>(p.value->size());
            for (T v : p.value->values()) w.put<double>(static_cast<double>(v));
        }
        return w.take();
    }

    static Network deserialize(std::span<const std::uint8_t> bytes) {
        ByteReader r(bytes);
        if (open_model(r) != "nn") throw ParseError("model file does not hold a neural network", 6);
        ModelSpec spec;
        spec.name = r.get_string(64);
        for (std::size_t d = 1; d < 4; ++d) {
            const std::size_t at = r.offset();
            spec.input[d] = static_cast<std::size_t>(r.get<std::uint64_t>());
            if (spec.input[d] == 0 || spec.input[d] > 4096) throw ParseError("implausible input shape", at);
        }
        std::size_t at = r.offset();
        const auto n_layers = r.get<std::uint64_t>();
        if (n_layers == 0 || n_layers > 256) throw ParseError("implausible layer count", at);
        for (std::uint64_t i = 0; i < n_layers; ++i) {
            at = r.offset();
            LayerSpec l;
            const auto kind = r.get<std::uint8_t>();
            if (kind >= layer_kind_names.size()) throw ParseError("unknown layer kind", at);
            l.kind = static_cast<LayerKind>(kind);
            l.filters = static_cast<std::size_t>(r.get<std::uint64_t>());
            l.kh = static_cast<std::size_t>(r.get<std::uint64_t>());
            l.kw = static_cast<std::size_t>(r.get<std::uint64_t>());
            l.units = static_cast<std::size_t>(r.get<std::uint64_t>());
            l.rate = r.get<double>();
            if (l.filters > 65536 || l.kh > 4096 || l.kw > 4096 || l.units > (1u << 20))
                throw ParseError("implausible layer parameters", at);
            spec.layers.push_back(l);
        }
        spec.l2_conv = r.get<double>();
        spec.l1_act = r.get<double>();
        spec.l1_layer = r.get<std::int32_t>();
        at = r.offset();
        std::optional<Network> net;
        try {
            net.emplace(spec, SeedSpec{});
        } catch (const ConfigError& e) {
            throw ParseError(std::string("invalid model spec: ") + e.what(), at);
        }
        auto ps = net->params();
        at = r.offset();
        if (r.get<std::uint64_t>() != ps.size()) throw ParseError("parameter tensor count mismatch", at);
        for (auto& p : ps) {
            at = r.offset();
            if (r.get<std::uint64_t>() != p.value->size()) throw ParseError("parameter size mismatch", at);
            for (T& v : p.value->values()) {
                at = r.offset();
                const double d = r.get<double>();
                if (!std::isfinite(d)) throw ParseError("non-finite weight", at);
                v = static_cast<T>(d);
            }
        }
        if (!r.at_end()) throw ParseError("trailing bytes after model body", r.offset());
        return std::move(*net);
    }

private:
    ModelSpec spec_;
    std::vector<std::unique_ptr<Layer<T>>> layers_;
    std::vector<Shape> shapes_;
    Tensor<T> activation_;
    Tensor<T> probs_;
};

/// Mean cross-entropy of probability rows against labels, plus the network's
/// penalty terms at its current state.
template <typename T>
double loss(const Tensor<T>& probs, std::span<const int> labels, Network<T>& net) {
    const std::size_t k = probs.per_sample();
    double ce = 0.0;
    for (std::size_t i = 0; i < labels.size(); ++i)
        ce -= std::log(std::max(static_cast<double>(probs[i * k + static_cast<std::size_t>(labels[i])]), 1e-300));
    return ce / static_cast<double>(labels.size()) + net.penalty();
}

/// Maximum relative error between analytic and central-difference gradients
/// over every parameter. Dropout masks are frozen after one training-mode pass.
/// Relative error is |a - n| / max(|a|, |n|, floor) so that parameters with a
/// vanishing gradient do not divide by zero.
template <typename T>
double grad_check(Network<T>& net, const Tensor<T>& x, std::span<const int> labels, double eps = 1e-5,
                  bool train = true, bool fused = false, double floor = 1e-7) {
    net.set_dropout_frozen(false);
    net.compute_gradients(x, labels, train, fused);
    net.set_dropout_frozen(true);
    net.compute_gradients(x, labels, train, fused);
    std::vector<std::vector<T>> analytic;
    for (auto& p : net.params()) analytic.emplace_back(p.grad->values().begin(), p.grad->values().end());

    double worst = 0.0;
    auto ps = net.params();
    for (std::size_t t = 0; t < ps.size(); ++t) {
        for (std::size_t j = 0; j < ps[t].value->size(); ++j) {
            T& v = (*ps[t].value)[j];
            const T orig = v;
            v = orig + static_cast<T>(eps);
            const double up = net.compute_gradients(x, labels, train, fused);
            v = orig - static_cast<T>(eps);
            const double down = net.compute_gradients(x, labels, train, fused);
            v = orig;
            const double numeric = (up - down) / (2.0 * eps);
            const double a = static_cast<double>(analytic[t][j]);
            const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), floor});
            worst = std::max(worst, rel);
        }
    }
    net.set_dropout_frozen(false);
    return worst;
}

} // namespace modrec::nn
